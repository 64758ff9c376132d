"""Complex matrix kernels.

All ``log2|I + A|`` evaluations go through :func:`logdet_ipa`, which works
on Cholesky pivots in the log domain; with transmit SNRs around 1e11 the raw
determinants leave double range quickly.
"""

import numpy as np

from .errors import NoConvergence, NonPSD

RANK_TOL = 1e-10


def herm(A):
    """Hermitian part ``(A + A^H) / 2`` (batched over leading axes)."""
    A = np.asarray(A)
    return 0.5 * (A + np.conj(np.swapaxes(A, -1, -2)))


def kron(A, B):
    return np.kron(np.atleast_2d(A), np.atleast_2d(B))


def vec(A):
    """Stack the columns of ``A`` into a column vector."""
    A = np.atleast_2d(np.asarray(A))
    return A.reshape(-1, 1, order="F")


def unvec(v, rows, cols):
    return np.asarray(v).reshape(rows, cols, order="F")


def logdet_ipa(A):
    """Return ``log2|I + A|`` for Hermitian PSD ``A``.

    Accepts a single matrix or a stack with shape ``(..., n, n)``, in which
    case an array of log-determinants is returned.

    Raises
    ------
    NonPSD
        If ``I + A`` is not positive definite, i.e. some eigenvalue of the
        symmetrized ``A`` is at or below ``-1 + 1e-12``.
    """
    A = herm(np.asarray(A, dtype=complex))
    n = A.shape[-1]
    if n == 0:
        return np.zeros(A.shape[:-2]) if A.ndim > 2 else 0.0
    M = A + np.eye(n)
    try:
        L = np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        raise NonPSD("I + A is not positive definite") from None
    piv = np.real(np.diagonal(L, axis1=-2, axis2=-1))
    # cholesky may succeed on a marginal pivot; enforce the documented margin
    if np.any(piv ** 2 < 1e-12):
        raise NonPSD("I + A has a pivot below 1e-12")
    out = 2.0 * np.sum(np.log2(piv), axis=-1)
    return float(out) if np.ndim(out) == 0 else out


class HermEig:
    """Eigen-decomposition ``A = V diag(w) V^H`` with ``w`` ascending."""

    __slots__ = ("eigenvalues", "eigenvectors")

    def __init__(self, eigenvalues, eigenvectors):
        self.eigenvalues = eigenvalues
        self.eigenvectors = eigenvectors

    def __iter__(self):
        return iter((self.eigenvalues, self.eigenvectors))

    def reconstruct(self):
        V = self.eigenvectors
        return (V * self.eigenvalues) @ V.conj().T


def eigh(A):
    """Hermitian eigen-decomposition of the symmetrized input."""
    A = herm(np.asarray(A, dtype=complex))
    if not np.all(np.isfinite(A)):
        raise ValueError("non-finite entries")
    try:
        w, V = np.linalg.eigh(A)
    except np.linalg.LinAlgError as exc:
        raise NoConvergence(str(exc)) from None
    return HermEig(w, V)


def svd(A, reduced=True):
    """Return ``(U, s, V)`` with ``A = U diag(s) V^H`` and ``s`` descending.

    With ``reduced=True`` singular values at or below ``RANK_TOL * s_max``
    are dropped together with their vectors.
    """
    A = np.atleast_2d(np.asarray(A, dtype=complex))
    if not np.all(np.isfinite(A)):
        raise ValueError("non-finite entries")
    try:
        U, s, Vh = np.linalg.svd(A, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NoConvergence(str(exc)) from None
    V = Vh.conj().T
    if reduced:
        keep = s > RANK_TOL * (s[0] if s.size else 0.0)
        U, s, V = U[:, keep], s[keep], V[:, keep]
    return U, s, V


def psd_sqrt(A):
    """Hermitian square root of a PSD matrix (negative eigenvalues clipped)."""
    w, V = eigh(A)
    return herm((V * np.sqrt(np.clip(w, 0.0, None))) @ V.conj().T)


def project_simplex(v, total=1.0):
    """Euclidean projection of a real vector onto ``{x >= 0, sum x = total}``."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - total
    idx = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / idx > 0)[0][-1]
    theta = css[rho] / (rho + 1)
    return np.maximum(v - theta, 0.0)


def project_psd_trace1(A):
    """Frobenius-nearest Hermitian PSD matrix with unit trace."""
    w, V = eigh(A)
    p = project_simplex(w)
    return herm((V * p) @ V.conj().T)
