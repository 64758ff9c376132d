"""Rate-constrained transmit covariance optimization.

Both objectives and the BD sum-rate constraint are concave log-determinants
of the covariance ``Q``, so the problem

    max f(Q)  s.t.  g(Q) >= r_bd,  tr Q = 1,  Q >= 0

is solved through its Lagrangian ``f + mu (g - r_bd)``: bisection on ``mu``
outside, projected gradient ascent over ``{Q >= 0, tr Q = 1}`` inside.
Gradients are Hermitian matrices ``G`` with ``df = tr(G dQ)``.
"""

import logging
import time
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigError, Infeasible, NoConvergence
from .linalg import eigh, herm, project_psd_trace1, psd_sqrt, svd
from .rates import BDSymbolSource, bd_gram_matrix, equivalent_channel, upper_bound_matrix

log = logging.getLogger(__name__)

LN2 = np.log(2.0)


@dataclass
class SolveOptions:
    mode: str = "upper_bound"
    r_bd: float = 0.0
    S: int = 1000
    grad_tol: float = 1e-6
    slack_tol_bits: float = 1e-4
    mu_max: float = 1e6
    max_outer: int = 60
    max_inner: int = 5000
    armijo_c: float = 1e-4
    backtrack: float = 0.5

    def __post_init__(self):
        if self.mode not in ("sample_average", "upper_bound"):
            raise ConfigError(f"unknown solver mode {self.mode!r}")
        for name in ("grad_tol", "slack_tol_bits", "mu_max", "armijo_c"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if not 0 < self.backtrack < 1:
            raise ConfigError("backtrack must lie in (0, 1)")
        if self.S < 1 or self.max_outer < 1 or self.max_inner < 1:
            raise ConfigError("S, max_outer and max_inner must be >= 1")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown SolveOptions keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class SolveDiagnostics:
    objective_bits: float = 0.0
    constraint_bits: float = 0.0
    mu: float = 0.0
    iterations: int = 0
    converged: bool = False
    wall_time_s: float = 0.0
    outer_iterations: int = 0
    pg_norm: float = 0.0

    def to_dict(self, timing=True):
        d = asdict(self)
        if not timing:
            d.pop("wall_time_s")
        return d


class LogdetObjective:
    """``f(Q) = mean_s log2|I + snr A_s^H Q A_s|`` over a stack of factors."""

    def __init__(self, factors, snr):
        factors = np.asarray(factors, dtype=complex)
        if factors.ndim == 2:
            factors = factors[None]
        self.A = factors
        self.AH = np.conj(np.swapaxes(factors, -1, -2))
        self.snr = snr

    def value(self, Q):
        return self.value_and_grad(Q, grad=False)[0]

    def value_and_grad(self, Q, grad=True):
        k = self.A.shape[-1]
        M = np.eye(k) + self.snr * (self.AH @ Q @ self.A)
        L = np.linalg.cholesky(herm(M))
        val = float(np.mean(2 * np.sum(np.log2(np.real(np.diagonal(L, axis1=-2, axis2=-1))),
                                       axis=-1)))
        if not grad:
            return val, None
        G = self.A @ np.linalg.solve(M, self.AH)
        return val, herm(self.snr / LN2 * np.mean(G, axis=0))


def upper_bound_objective(ch, params):
    """Jensen upper bound ``log2|I + snr R^(1/2) Q R^(1/2)|``."""
    return LogdetObjective(psd_sqrt(upper_bound_matrix(ch, params.alpha)), params.snr)


def sample_average_objective(ch, params, samples):
    """Sample-average primary rate over frozen BD symbol draws ``(S, J)``."""
    H = equivalent_channel(ch, samples, params.alpha)
    if ch.M_r <= ch.M_t:
        factors = np.conj(np.swapaxes(H, -1, -2))
    else:
        # M_t x M_t square roots of H_s^H H_s; same value, smaller systems
        w, V = np.linalg.eigh(herm(np.conj(np.swapaxes(H, -1, -2)) @ H))
        factors = V * np.sqrt(np.clip(w, 0.0, None))[:, None, :]
    return LogdetObjective(factors, params.snr)


def objective_upper_bound(Q, ch, params):
    """Value and gradient of the upper-bound objective."""
    return upper_bound_objective(ch, params).value_and_grad(herm(Q))


def objective_sample_average(Q, ch, params, samples):
    """Value and gradient of the sample-average objective."""
    return sample_average_objective(ch, params, samples).value_and_grad(herm(Q))


class ConstraintRate:
    """BD sum rate ``g(Q)`` in its ``J x J`` form and its gradient.

    With ``M = I + c Psi^H (Q kron (H^H H)^T) Psi`` and ``c = K snr alpha``
    the gradient is ``(snr alpha / ln 2) A (M^-1 o conj(GG)) A^H`` where
    ``A = [h_1, ..., h_J]``, ``GG_ij = g_j^H g_i`` and ``o`` is the
    entrywise product.
    """

    def __init__(self, ch, params):
        self.ch = ch
        self.params = params
        self.A = ch.h.T
        self.gg = ch.g @ ch.g.conj().T
        self.c = params.K * params.snr * params.alpha
        self.trivial = ch.J == 0 or params.alpha == 0

    def value(self, Q):
        return self.value_and_grad(Q, grad=False)[0]

    def value_and_grad(self, Q, grad=True):
        if self.trivial:
            return 0.0, (np.zeros((self.ch.M_t,) * 2, dtype=complex) if grad else None)
        J = self.ch.J
        N = self.A.conj().T @ Q @ self.A
        M = herm(np.eye(J) + self.c * N * self.gg)
        L = np.linalg.cholesky(M)
        val = 2 * float(np.sum(np.log2(np.real(np.diag(L))))) / self.params.K
        if not grad:
            return val, None
        W = np.linalg.inv(M)
        T = W * self.gg.conj()
        G = self.params.snr * self.params.alpha / LN2 * (self.A @ T @ self.A.conj().T)
        return val, herm(G)


def constraint_rate(Q, ch, params):
    return ConstraintRate(ch, params).value(herm(np.asarray(Q, dtype=complex)))


def constraint_gradient(Q, ch, params):
    return ConstraintRate(ch, params).value_and_grad(herm(np.asarray(Q, dtype=complex)))[1]


def constraint_gradient_basis(Q, ch, params):
    """Gradient assembled direction by direction from the Kronecker form.

    Slow reference: for every basis direction ``E`` of the Hermitian
    matrices it evaluates ``tr(M^-1 Psi^H (E kron (H^H H)^T) Psi)``.
    """
    from .rates import _kron_form

    Mt = ch.M_t
    c = params.K * params.snr * params.alpha
    M = np.eye(ch.J) + c * _kron_form(herm(Q), ch)
    W = np.linalg.inv(M)
    G = np.zeros((Mt, Mt), dtype=complex)
    for p in range(Mt):
        for q in range(Mt):
            E = np.zeros((Mt, Mt))
            E[p, q] = 1.0
            # d/dQ_pq of tr(...) equals G_qp under df = tr(G dQ)
            G[q, p] = c / (params.K * LN2) * np.trace(W @ _kron_form(E, ch))
    return herm(G)


def _inner(fun, Q, opts, step=None):
    """Projected gradient ascent with Barzilai-Borwein steps and Armijo backtracking.

    Returns ``(Q, value, iterations, converged, pg_norm, last_step)`` where
    ``pg_norm = ||Q - P(Q + grad)||_F`` and ``P`` projects onto
    ``{Q >= 0, tr Q = 1}``.
    """
    Q = project_psd_trace1(Q)
    val, G = fun(Q)
    if step is None:
        step = 1.0 / max(LN2 * np.linalg.norm(G, 2) ** 2, 1e-12)
    pg = np.inf
    for it in range(1, opts.max_inner + 1):
        pg = np.linalg.norm(Q - project_psd_trace1(Q + G))
        if pg <= opts.grad_tol:
            return Q, val, it - 1, True, pg, step
        t = step
        while True:
            Qn = project_psd_trace1(Q + t * G)
            d = Qn - Q
            vn, Gn = fun(Qn)
            gain = np.real(np.vdot(G, d))
            if vn >= val + opts.armijo_c * gain:
                break
            # value differences at round-off level: fall back to the
            # gradient-based (trapezoidal) estimate of the increase
            if (abs(vn - val) <= 1e-12 * max(1.0, abs(val))
                    and 0.5 * np.real(np.vdot(G + Gn, d)) >= opts.armijo_c * gain):
                break
            t *= opts.backtrack
            if t < 1e-30:
                return Q, val, it, False, pg, step
        y = Gn - G
        sy = -np.real(np.vdot(d, y))
        step = np.real(np.vdot(d, d)) / sy if sy > 1e-300 else 2 * t
        step = float(np.clip(step, 1e-12, 1e12))
        Q, val, G = Qn, vn, Gn
    pg = np.linalg.norm(Q - project_psd_trace1(Q + G))
    return Q, val, opts.max_inner, pg <= opts.grad_tol, pg, step


def _lagrangian(f, g, mu):
    def fun(Q):
        fv, fg = f.value_and_grad(Q)
        if mu == 0:
            return fv, fg
        gv, gg = g.value_and_grad(Q)
        return fv + mu * gv, fg + mu * gg
    return fun


def build_objective(ch, params, opts, rng=None):
    if opts.mode == "upper_bound":
        return upper_bound_objective(ch, params)
    samples = BDSymbolSource(params.constellation, rng).draw((opts.S, ch.J))
    return sample_average_objective(ch, params, samples)


def solve_precoding(ch, params, opts, rng=None, objective=None):
    """Maximize the primary rate subject to ``g(Q) >= opts.r_bd``.

    ``rng`` seeds the frozen symbol draws of the sample-average mode; a
    prebuilt ``objective`` may be passed instead.  Returns
    ``(Q, SolveDiagnostics)``.

    Raises
    ------
    Infeasible
        When even the BD-rate maximizing covariance falls short of ``r_bd``
        by more than ``slack_tol_bits``.
    NoConvergence
        When the multiplier passes ``mu_max`` or the bisection runs out of
        steps without meeting the slackness tolerance.
    """
    t0 = time.perf_counter()
    f = objective if objective is not None else build_objective(ch, params, opts, rng)
    g = ConstraintRate(ch, params)
    r = opts.r_bd
    Q0 = np.eye(ch.M_t, dtype=complex) / ch.M_t
    total = 0

    def finish(Q, mu, converged, outer, pg):
        Q = herm(Q)
        d = SolveDiagnostics(f.value(Q), g.value(Q), float(mu), total, bool(converged),
                             time.perf_counter() - t0, outer, float(pg))
        log.debug("solve finished: %s", d)
        return Q, d

    Q, _, it, ok, pg, step = _inner(f.value_and_grad, Q0, opts)
    total += it
    if g.value(Q) >= r - opts.slack_tol_bits:
        return finish(Q, 0.0, ok, 0, pg)

    Qg, gmax, it, _, _, _ = _inner(g.value_and_grad, Q0, opts)
    total += it
    if gmax < r - opts.slack_tol_bits:
        raise Infeasible(f"max BD sum rate {gmax:.6g} bits < threshold {r:.6g}")
    # aim at the threshold itself so the returned point is feasible, unless
    # only the tolerance band below it is reachable
    target = min(r, gmax)

    lo, Q_lo = 0.0, Q
    hi = 1.0
    outer = 0
    while True:
        Q_hi, _, it, ok, pg, step = _inner(_lagrangian(f, g, hi), Q_lo, opts)
        total += it
        outer += 1
        if g.value(Q_hi) >= target:
            break
        lo, Q_lo = hi, Q_hi
        hi *= 4.0
        if hi > opts.mu_max or outer >= opts.max_outer:
            raise NoConvergence(f"multiplier exceeded {opts.mu_max:g} before reaching r_bd")

    while outer < opts.max_outer:
        if g.value(Q_hi) - target <= opts.slack_tol_bits and hi - lo <= 1e-3 * hi:
            return finish(Q_hi, hi, ok, outer, pg)
        if hi - lo <= 1e-3 * hi:
            break
        mid = 0.5 * (lo + hi)
        Qm, _, it, okm, pgm, _ = _inner(_lagrangian(f, g, mid), Q_hi, opts)
        total += it
        outer += 1
        if g.value(Qm) >= target:
            hi, Q_hi, ok, pg = mid, Qm, okm, pgm
        else:
            lo, Q_lo = mid, Qm

    # the maximizer jumps across the threshold: both ends maximize nearly the
    # same Lagrangian, so land on g = target along the segment between them
    if hi - lo <= 1e-3 * hi and g.value(Q_lo) < target <= g.value(Q_hi):
        a, b = 0.0, 1.0  # weight on Q_hi
        for _ in range(60):
            t = 0.5 * (a + b)
            if g.value(t * Q_hi + (1 - t) * Q_lo) >= target:
                b = t
            else:
                a = t
        Q = b * Q_hi + (1 - b) * Q_lo
        return finish(Q, hi, ok and g.value(Q) - target <= opts.slack_tol_bits, outer, pg)
    raise NoConvergence(f"bisection on mu did not meet slackness in {opts.max_outer} steps")


def covariance_to_precoder(Q, tol=1e-8):
    """Factor ``Q = F F^H`` with ``F = U diag(sqrt(w))`` over the retained eigenpairs.

    Returns ``(F, M_s)`` with eigenvalues sorted in descending order.
    """
    w, U = eigh(Q)
    w, U = w[::-1], U[:, ::-1]
    keep = w > tol * max(w[0], 0.0) if w[0] > 0 else np.zeros(w.size, dtype=bool)
    F = U[:, keep] * np.sqrt(w[keep])
    return F, int(keep.sum())


def waterfill(gains, total=1.0):
    """Maximize ``sum log(1 + gains_i p_i)`` with ``p >= 0``, ``sum p = total``."""
    gains = np.asarray(gains, dtype=float)
    p = np.zeros_like(gains)
    pos = np.nonzero(gains > 0)[0]
    if pos.size == 0:
        p[:] = total / gains.size
        return p
    inv = 1.0 / gains[pos]
    order = np.argsort(inv)
    inv_sorted = inv[order]
    for n in range(pos.size, 0, -1):
        level = (total + inv_sorted[:n].sum()) / n
        if level > inv_sorted[n - 1]:
            break
    alloc = np.maximum(level - inv, 0.0)
    p[pos] = alloc
    return p


def direct_link_matching(H_d, snr, M_t):
    """Benchmark precoder matched to ``H_d`` only.

    ``F = V diag(sqrt(p)) / sqrt(M_t)`` with ``V`` from the reduced SVD of
    ``H_d`` and ``p`` the classical waterfilling (summing to ``M_t``) over
    its squared singular values.
    """
    _, s, V = svd(H_d)
    if s.size == 0:
        return np.eye(M_t, dtype=complex) / np.sqrt(M_t)
    p = waterfill(snr * s ** 2 / M_t, total=M_t)
    return V * np.sqrt(p) / np.sqrt(M_t)
