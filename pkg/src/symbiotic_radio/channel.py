"""Scenario geometry, large-scale gains and small-scale fading.

Arrays are half-wavelength uniform linear arrays laid along the y-axis, so
a link travelling along the x-axis is at broadside and its steering vector
is all ones.  Random draws use numpy's PCG64 generator; every BD gets its
own substream spawned from ``SeedSequence(seed)``, so BD ``j`` sees the same
position and fading regardless of how many BDs are drawn.
"""

from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .errors import ConfigError, NonPositiveDistance

SPEED_OF_LIGHT = 299_792_458.0
PRNG_NAME = "numpy.random.PCG64"
PRNG_SCHEME = "SeedSequence(seed).spawn(J); child j drives BD j position and fading"


def dbm_to_watt(dbm):
    return 10.0 ** ((dbm - 30.0) / 10.0)


def db_to_linear(db):
    return 10.0 ** (db / 10.0)


@dataclass
class Scenario:
    pt_position: tuple = (0.0, 0.0)
    ap_position: tuple = (200.0, 0.0)
    bd_center: tuple = (180.0, 20.0)
    bd_radius: float = 5.0
    carrier_hz: float = 3.5e9
    gamma_ta: float = 2.0
    gamma_tb: float = 2.7
    rice_k_db: float = 10.0
    cascade_scale: float = 0.01

    def __post_init__(self):
        self.pt_position = tuple(float(x) for x in self.pt_position)
        self.ap_position = tuple(float(x) for x in self.ap_position)
        self.bd_center = tuple(float(x) for x in self.bd_center)
        if self.bd_radius <= 0:
            raise ConfigError("bd_radius must be positive")
        if self.carrier_hz <= 0:
            raise ConfigError("carrier_hz must be positive")
        if self.gamma_ta < 0 or self.gamma_tb < 0:
            raise ConfigError("path-loss exponents must be non-negative")

    def to_dict(self):
        d = asdict(self)
        for k in ("pt_position", "ap_position", "bd_center"):
            d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d):
        return _from_dict(cls, d)


@dataclass
class SystemParams:
    M_t: int = 4
    M_r: int = 8
    J: int = 50
    K: int = 128
    P_dbm: float = 0.0
    sigma2_dbm: float = -110.0
    alpha: float = 1.0
    constellation: str = "CSCG"

    def __post_init__(self):
        for name in ("M_t", "M_r", "K"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.J < 0:
            raise ConfigError("J must be >= 0")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError("alpha must lie in [0, 1]")
        if self.constellation not in ("CSCG", "QPSK"):
            raise ConfigError("constellation must be CSCG or QPSK")

    @property
    def snr(self):
        """Transmit SNR ``P / sigma^2`` (linear)."""
        return db_to_linear(self.P_dbm - self.sigma2_dbm)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return _from_dict(cls, d)


def _from_dict(cls, d):
    names = {f.name for f in fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**d)


@dataclass
class ChannelSet:
    """One channel realization.

    ``h`` has shape ``(J, M_t)`` (row ``j`` is ``h_j``) and ``g`` has shape
    ``(J, M_r)``; the cascaded channel of BD ``j`` is ``g_j h_j^H``.
    """

    H_d: np.ndarray
    h: np.ndarray
    g: np.ndarray
    beta_h: np.ndarray
    beta_g: np.ndarray
    beta_hd: float
    bd_positions: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))

    def __post_init__(self):
        M_r, M_t = self.H_d.shape
        J = self.h.shape[0]
        if self.h.shape != (J, M_t) or self.g.shape != (J, M_r):
            raise ValueError("BD channel dimensions inconsistent with H_d")

    @property
    def J(self):
        return self.h.shape[0]

    @property
    def M_t(self):
        return self.H_d.shape[1]

    @property
    def M_r(self):
        return self.H_d.shape[0]

    def cascade(self):
        """``H = [g_1 h_1^H, ..., g_J h_J^H]`` of shape ``(M_r, M_t J)``."""
        blocks = self.g[:, :, None] * self.h.conj()[:, None, :]
        return np.concatenate(list(blocks), axis=1) if self.J else np.zeros((self.M_r, 0))

    def subset(self, J):
        """The first ``J`` BDs of this realization."""
        return ChannelSet(self.H_d, self.h[:J], self.g[:J], self.beta_h[:J],
                          self.beta_g[:J], self.beta_hd, self.bd_positions[:J])


def pathloss(d, gamma, carrier_hz):
    """Large-scale gain ``(lambda / 4 pi)^2 d^-gamma``."""
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise NonPositiveDistance("distance must be positive")
    lam = SPEED_OF_LIGHT / carrier_hz
    out = (lam / (4 * np.pi)) ** 2 * d ** (-gamma)
    return float(out) if out.ndim == 0 else out


def steering(n, sin_angle):
    """Unit-modulus ULA response, half-wavelength spacing."""
    return np.exp(-1j * np.pi * np.arange(n) * sin_angle)


def _sin_angle(src, dst):
    v = np.asarray(dst, dtype=float) - np.asarray(src, dtype=float)
    return v[1] / np.hypot(v[0], v[1])


def los_channel(scenario, M_t, M_r):
    """Rank-one LoS direct link between PT and AP."""
    pt, ap = scenario.pt_position, scenario.ap_position
    beta_hd = pathloss(np.hypot(ap[0] - pt[0], ap[1] - pt[1]), scenario.gamma_ta,
                       scenario.carrier_hz)
    a_t = steering(M_t, _sin_angle(pt, ap))
    a_r = steering(M_r, _sin_angle(ap, pt))
    return np.sqrt(beta_hd) * np.outer(a_r, a_t.conj())


def rician(beta, rice_k_db, dim, rng, sin_angle=0.0):
    """Rician vector with mean power ``beta`` per entry.

    ``rice_k_db = inf`` gives the pure LoS steering vector and
    ``rice_k_db = -inf`` pure Rayleigh fading.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    kappa = db_to_linear(rice_k_db)
    if np.isinf(kappa):
        w_los, w_nlos = 1.0, 0.0
    else:
        w_los, w_nlos = np.sqrt(kappa / (1 + kappa)), np.sqrt(1 / (1 + kappa))
    nlos = (rng.standard_normal(dim) + 1j * rng.standard_normal(dim)) / np.sqrt(2)
    return np.sqrt(beta) * (w_los * steering(dim, sin_angle) + w_nlos * nlos)


def _bd_streams(seed, J):
    if isinstance(seed, np.random.Generator):
        return seed.spawn(J)
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [np.random.Generator(np.random.PCG64(c)) for c in ss.spawn(J)]


def uniform_disc(rng, center, radius):
    """One point uniform over a disc (inverse-CDF radius)."""
    r = radius * np.sqrt(rng.random())
    phi = 2 * np.pi * rng.random()
    return np.array([center[0] + r * np.cos(phi), center[1] + r * np.sin(phi)])


def sample_scenario(scenario, params, seed):
    """Draw BD positions and all channels for one realization.

    ``seed`` may be an int, a ``SeedSequence`` or a ``Generator``; the same
    seed always reproduces the same ``ChannelSet`` bit for bit.
    """
    M_t, M_r, J = params.M_t, params.M_r, params.J
    H_d = los_channel(scenario, M_t, M_r)
    pt, ap = scenario.pt_position, scenario.ap_position
    beta_hd = pathloss(np.hypot(ap[0] - pt[0], ap[1] - pt[1]), scenario.gamma_ta,
                       scenario.carrier_hz)
    h = np.zeros((J, M_t), dtype=complex)
    g = np.zeros((J, M_r), dtype=complex)
    beta_h = np.zeros(J)
    pos = np.zeros((J, 2))
    for j, rng in enumerate(_bd_streams(seed, J)):
        pos[j] = uniform_disc(rng, scenario.bd_center, scenario.bd_radius)
        beta_h[j] = pathloss(np.hypot(*(pos[j] - pt)), scenario.gamma_tb, scenario.carrier_hz)
        h[j] = rician(beta_h[j], scenario.rice_k_db, M_t, rng, _sin_angle(pt, pos[j]))
        g[j] = rician(scenario.cascade_scale, scenario.rice_k_db, M_r, rng,
                      _sin_angle(ap, pos[j]))
    beta_g = np.full(J, scenario.cascade_scale)
    return ChannelSet(H_d, h, g, beta_h, beta_g, beta_hd, pos)
