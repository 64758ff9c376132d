"""Large-J closed forms for the BD sum rate and the primary rate."""

from dataclasses import dataclass

import numpy as np

from .errors import NoConvergence, WrongMode
from .linalg import eigh, logdet_ipa


@dataclass
class AsymParams:
    J: int
    K: int
    M_t: int
    M_r: int
    snr: float
    alpha: float
    beta_h: float
    beta_g: float
    beta_hd: float = 0.0

    def __post_init__(self):
        if min(self.K, self.M_t, self.M_r) < 1 or self.J < 0:
            raise ValueError("J >= 0 and K, M_t, M_r >= 1 required")
        if self.snr < 0 or self.alpha < 0 or self.beta_h < 0 or self.beta_g < 0 or self.beta_hd < 0:
            raise ValueError("powers and gains must be non-negative")

    @property
    def bd_gain(self):
        """``J K snr alpha beta_h beta_g``."""
        return self.J * self.K * self.snr * self.alpha * self.beta_h * self.beta_g

    @property
    def uplift(self):
        """``J alpha M_r beta_g beta_h``, the isotropic gain the BDs add to ``H^H H``."""
        return self.J * self.alpha * self.M_r * self.beta_g * self.beta_h


@dataclass
class PowerAllocation:
    p: np.ndarray
    mmse: np.ndarray
    iterations: int = 0
    residual: float = 0.0


def bd_sumrate_asym(Q, ap):
    """``(M_r/K) log2|I + J K snr alpha beta_h beta_g Q|``."""
    return ap.M_r / ap.K * logdet_ipa(ap.bd_gain * np.asarray(Q, dtype=complex))


def _mmse(p, gains):
    return 1.0 / (1.0 + gains * p)


def fixed_point_map(p, gains):
    """One application of the MMSE power-allocation map.

    ``gains[i] = (snr / M_t) (lambda_i + uplift)``.
    """
    one_minus = 1.0 - _mmse(p, gains)
    mean = np.mean(one_minus)
    if mean <= 0:
        return np.ones_like(p)
    return one_minus / mean


def waterfilling_fixed_point(eigs, snr, M_t, uplift, damping=0.5, tol=1e-8, max_iter=10_000):
    """Solve the MMSE waterfilling fixed point by damped iteration.

    Starts from uniform power ``p_i = 1`` and iterates
    ``p <- (1 - damping) p + damping T(p)`` until ``||p - T(p)||_inf <= tol``.
    The number of streams is ``len(eigs)`` and ``sum(p)`` stays equal to it.
    """
    eigs = np.clip(np.asarray(eigs, dtype=float), 0.0, None)
    gains = snr / M_t * (eigs + uplift)
    p = np.ones_like(gains)
    for it in range(1, max_iter + 1):
        tp = fixed_point_map(p, gains)
        res = float(np.max(np.abs(p - tp)))
        if res <= tol:
            return PowerAllocation(p, _mmse(p, gains), it, res)
        p = (1 - damping) * p + damping * tp
    raise NoConvergence(f"fixed point residual {res:.3e} after {max_iter} iterations")


def primary_rate_asym(H_d, ap):
    """Asymptotic primary rate with its optimal precoder.

    Returns ``(rate_bits, F, allocation)`` where
    ``F = V diag(sqrt(p)) / sqrt(M_t)`` over the eigenvectors of ``H_d^H H_d``.
    """
    H_d = np.atleast_2d(np.asarray(H_d, dtype=complex))
    w, V = eigh(H_d.conj().T @ H_d)
    w, V = w[::-1], V[:, ::-1]
    alloc = waterfilling_fixed_point(w, ap.snr, ap.M_t, ap.uplift)
    lam = np.clip(w, 0.0, None)
    rate = float(np.sum(np.log2(1 + ap.snr / ap.M_t * alloc.p * (lam + ap.uplift))))
    F = V * np.sqrt(alloc.p) / np.sqrt(ap.M_t)
    return rate, F, alloc


def simo_asym(ap, h_d_norm2):
    """``(r_bd, r_s)`` for a single-antenna PT."""
    if ap.M_t != 1:
        raise WrongMode("SIMO formulas need M_t == 1")
    r_bd = ap.M_r / ap.K * np.log2(1 + ap.bd_gain)
    r_s = np.log2(1 + ap.snr * (h_d_norm2 + ap.uplift))
    return float(r_bd), float(r_s)


def rs_of_rbd(r_bd, snr, h_d_norm2, M_r, K):
    """Primary rate as a function of the BD sum rate (SIMO, large J)."""
    r_bd = np.asarray(r_bd, dtype=float)
    if np.any(r_bd < 0):
        raise ValueError("r_bd must be non-negative")
    out = np.log2(1 + snr * h_d_norm2 + M_r / K * np.expm1(K / M_r * r_bd * np.log(2)))
    return float(out) if out.ndim == 0 else out


def rs_of_rbd_los(r_bd, snr, beta_hd, M_r, K):
    """LoS direct link variant: ``||h_d||^2 = beta_hd M_r``."""
    return rs_of_rbd(r_bd, snr, beta_hd * M_r, M_r, K)
