"""Exact primary and BD rates for one channel realization."""

from dataclasses import asdict, dataclass, field

import numpy as np

from .channel import dbm_to_watt
from .errors import NonPSD
from .linalg import herm, logdet_ipa

# Above this many rows in Psi the literal Kronecker form is replaced by the
# equivalent J x J Hadamard-product form (same matrix, no Kronecker assembly).
KRON_LITERAL_MAX_ROWS = 1024


class BDSymbolSource:
    """Zero-mean, unit-power BD symbols ``c_j(n)``."""

    def __init__(self, constellation="CSCG", rng=None):
        if constellation not in ("CSCG", "QPSK"):
            raise ValueError(f"unknown constellation {constellation!r}")
        self.constellation = constellation
        self.rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)

    def draw(self, size):
        rng = self.rng
        if self.constellation == "CSCG":
            return (rng.standard_normal(size) + 1j * rng.standard_normal(size)) / np.sqrt(2)
        k = rng.integers(0, 4, size=size)
        return np.exp(1j * (np.pi / 4 + np.pi / 2 * k))


@dataclass
class RateReport:
    primary_rate_bits: float = 0.0
    bd_sum_rate_bits: float = 0.0
    per_bd_sinr: list = field(default_factory=list)
    decode_order: list = field(default_factory=list)
    primary_rate_stderr: float = 0.0

    def to_dict(self):
        return asdict(self)


def equivalent_channel(ch, c, alpha):
    """``H_d + sqrt(alpha) sum_j c_j g_j h_j^H``.

    ``c`` has shape ``(J,)`` or ``(S, J)``; the result is ``(M_r, M_t)`` or
    ``(S, M_r, M_t)`` accordingly.
    """
    c = np.asarray(c)
    if c.shape[-1] != ch.J:
        raise ValueError(f"expected {ch.J} BD symbols, got {c.shape[-1]}")
    if ch.J == 0 or alpha == 0:
        return np.broadcast_to(ch.H_d, c.shape[:-1] + ch.H_d.shape).copy()
    scatter = np.einsum("...j,jr,jt->...rt", c, ch.g, ch.h.conj())
    return ch.H_d + np.sqrt(alpha) * scatter


def _check_covariance(Q):
    Q = herm(np.asarray(Q, dtype=complex))
    if np.real(np.trace(Q)) > 1 + 1e-9:
        raise ValueError("tr(Q) exceeds 1")
    if np.linalg.eigvalsh(Q)[0] < -1e-9:
        raise NonPSD("Q is not positive semidefinite")
    return Q


def primary_rate_instant(H_eq, Q, snr):
    """``log2|I + snr H_eq Q H_eq^H|`` (vectorized over leading axes of H_eq)."""
    Q = _check_covariance(Q)
    H_eq = np.asarray(H_eq)
    return logdet_ipa(snr * H_eq @ Q @ np.conj(np.swapaxes(H_eq, -1, -2)))


def primary_rate_mc(ch, Q, params, source, S):
    """Monte Carlo estimate of the average primary rate.

    Returns ``(mean, stderr)``; ``stderr`` is NaN when ``S == 1``.
    """
    if S < 1:
        raise ValueError("S must be >= 1")
    c = source.draw((S, ch.J))
    r = np.atleast_1d(primary_rate_instant(equivalent_channel(ch, c, params.alpha), Q,
                                           params.snr))
    stderr = float(np.std(r, ddof=1) / np.sqrt(S)) if S > 1 else float("nan")
    return float(np.mean(r)), stderr


def bd_effective_vectors(ch, F, params):
    """Rows ``x_j = vec(sqrt(K P alpha) g_j h_j^H F)``, shape ``(J, M_r M_s)``."""
    F = np.atleast_2d(np.asarray(F, dtype=complex))
    if F.shape[0] != ch.M_t:
        raise ValueError("F must have M_t rows")
    scale = np.sqrt(params.K * dbm_to_watt(params.P_dbm) * params.alpha)
    hF = ch.h.conj() @ F  # row j is h_j^H F
    # vec(g h^H F) = (h^H F)^T kron g  (column stacking)
    X = scale * (hF[:, :, None] * ch.g[:, None, :])
    return X.reshape(ch.J, -1)


def mmse_sic(x, sigma2, K):
    """MMSE-SIC over the BD multiple-access channel.

    BDs are decoded in descending ``||x_j||^2`` (ties by index); BD ``j`` sees
    the not-yet-decoded BDs as interference.
    """
    x = np.atleast_2d(np.asarray(x, dtype=complex))
    J = x.shape[0]
    if J == 0:
        return RateReport()
    strength = np.sum(np.abs(x) ** 2, axis=1)
    order = sorted(range(J), key=lambda j: (-strength[j], j))
    return _sic_rates(x, sigma2, K, order)


def _sic_rates(x, sigma2, K, order):
    y = x / np.sqrt(sigma2)
    n = y.shape[1]
    J = len(order)
    sinr = np.zeros(J)
    A = np.eye(n, dtype=complex)
    # walk the order backwards so A holds I + sum over later-decoded users
    for pos in range(J - 1, -1, -1):
        j = order[pos]
        v = y[j]
        sinr[j] = max(float(np.real(v.conj() @ np.linalg.solve(A, v))), 0.0)
        A += np.outer(v, v.conj())
    total = float(np.sum(np.log2(1 + sinr)) / K)
    return RateReport(bd_sum_rate_bits=total, per_bd_sinr=sinr.tolist(),
                      decode_order=[j + 1 for j in order])


def bd_sumrate_logdet(x, sigma2, K):
    """``(1/K) log2|I + (1/sigma2) sum_j x_j x_j^H|``."""
    x = np.atleast_2d(np.asarray(x, dtype=complex))
    if x.shape[0] == 0:
        return 0.0
    return logdet_ipa(x.T @ x.conj() / sigma2) / K


def psi_matrix(M_t, J):
    """Selection matrix with ``X = sqrt(K P alpha) (F^T kron H) Psi``.

    Column ``j`` picks the ``vec(I_{M_t})`` pattern inside the column block of
    ``F^T kron H`` that belongs to BD ``j``.  In the ``(a, j, b)`` ordering of
    those columns that is row ``a M_t J + j M_t + a``; the stacking is a row
    permutation of ``blockdiag(vec(I), ..., vec(I))``.
    """
    Psi = np.zeros((M_t * M_t * J, J))
    a = np.arange(M_t)
    for j in range(J):
        Psi[a * M_t * J + j * M_t + a, j] = 1.0
    return Psi


def bd_gram_matrix(Q, ch, params):
    """``Psi^H (Q kron (H^H H)^T) Psi`` without the Kronecker assembly.

    Entry ``(i, j)`` equals ``(h_i^H Q h_j) (g_j^H g_i)``.
    """
    A = ch.h.T  # M_t x J
    hQh = A.conj().T @ Q @ A
    gg = ch.g @ ch.g.conj().T  # (i, j) -> g_j^H g_i
    return hQh * gg


def _kron_form(Q, ch):
    H = ch.cascade()
    Psi = psi_matrix(ch.M_t, ch.J)
    return Psi.T @ np.kron(Q, (H.conj().T @ H).T) @ Psi


def bd_sumrate_kron(Q, ch, params, literal=None):
    """``(1/K) log2|I_J + K snr alpha Psi^H (Q kron (H^H H)^T) Psi|``.

    ``literal`` forces (True) or forbids (False) the explicit Kronecker
    assembly; by default it is used while ``Psi`` has at most
    ``KRON_LITERAL_MAX_ROWS`` rows.
    """
    if ch.J == 0 or params.alpha == 0:
        return 0.0
    Q = herm(np.asarray(Q, dtype=complex))
    if literal is None:
        literal = ch.M_t ** 2 * ch.J <= KRON_LITERAL_MAX_ROWS
    G = _kron_form(Q, ch) if literal else bd_gram_matrix(Q, ch, params)
    c = params.K * params.snr * params.alpha
    return logdet_ipa(c * G) / params.K


def bd_sumrate_from_precoder(F, ch, params):
    """BD sum rate through MMSE-SIC on the effective vectors of ``F``."""
    x = bd_effective_vectors(ch, F, params)
    return mmse_sic(x, dbm_to_watt(params.sigma2_dbm), params.K)


def upper_bound_matrix(ch, alpha):
    """``H_d^H H_d + alpha sum_j ||g_j||^2 h_j h_j^H``."""
    R = ch.H_d.conj().T @ ch.H_d
    if ch.J and alpha:
        w = alpha * np.sum(np.abs(ch.g) ** 2, axis=1)
        R = R + (ch.h.T * w) @ ch.h.conj()
    return herm(R)
