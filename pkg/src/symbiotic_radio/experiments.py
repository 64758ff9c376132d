"""Sweeps behind the rate/SNR, timing, power and BD-count figures.

Every random quantity is drawn from a ``SeedSequence`` whose entropy is
``[seed, stream, replication, ...]``, so each table cell can be recomputed
on its own and results do not depend on the worker count.
"""

import csv
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .asymptotics import rs_of_rbd_los
from .channel import PRNG_NAME, PRNG_SCHEME, Scenario, SystemParams, db_to_linear, sample_scenario
from .errors import ConfigError
from .precoder import (
    ConstraintRate,
    SolveOptions,
    _inner,
    build_objective,
    direct_link_matching,
    solve_precoding,
)
from .rates import BDSymbolSource, bd_sumrate_kron, primary_rate_mc

log = logging.getLogger(__name__)

# stream ids mixed into the seed entropy
CHANNEL, SOLVER, EVAL = 0, 1, 2

FIGURE_COLUMNS = {
    2: ["r_bd_asym", "P_bar", "r_s_asym"],
    3: ["J", "mode", "mean_wall_time", "wall_time_stderr", "mean_iterations"],
    4: ["P_dbm", "scheme", "R_s", "R_s_stderr", "R_BD"],
    6: ["J", "mean_R_s", "mean_R_s_stderr", "mean_R_BD", "mean_R_BD_stderr"],
}
FIGURE_COLUMNS[5] = FIGURE_COLUMNS[4]
FIGURE_COLUMNS[7] = FIGURE_COLUMNS[6]


@dataclass
class ExperimentConfig:
    scenario: Scenario = field(default_factory=Scenario)
    params: SystemParams = field(default_factory=SystemParams)
    solver: SolveOptions = field(default_factory=SolveOptions)
    sweep: dict = field(default_factory=lambda: {"J": [1, 5, 10, 20, 50]})
    seed: int = 0
    replications: int = 100
    output_path: str = None
    # BD threshold per channel draw as a fraction of max_Q g(Q); None keeps solver.r_bd
    r_bd_fraction: float = None
    # fresh BD-symbol draws used to evaluate the primary rate of a solution
    mc_samples: int = 1000
    snr_db: list = field(default_factory=lambda: [80.0, 90.0, 100.0, 110.0])
    beta_hd_db: float = -120.0
    precoder: str = "uniform"
    threads: int = 1

    def __post_init__(self):
        if not isinstance(self.sweep, dict) or len(self.sweep) != 1:
            raise ConfigError("sweep must hold exactly one of power_dbm, J, r_bd")
        (key, values), = self.sweep.items()
        if key not in ("power_dbm", "J", "r_bd"):
            raise ConfigError(f"unknown sweep variable {key!r}")
        if not values:
            raise ConfigError("sweep list is empty")
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")
        if self.mc_samples < 1:
            raise ConfigError("mc_samples must be >= 1")
        if self.r_bd_fraction is not None and not 0 <= self.r_bd_fraction <= 1:
            raise ConfigError("r_bd_fraction must lie in [0, 1]")
        if self.precoder not in ("uniform", "direct_link"):
            raise ConfigError("precoder must be uniform or direct_link")

    @property
    def sweep_key(self):
        return next(iter(self.sweep))

    @property
    def sweep_values(self):
        return list(self.sweep[self.sweep_key])

    def to_dict(self):
        return {
            "scenario": self.scenario.to_dict(),
            "params": self.params.to_dict(),
            "solver": self.solver.to_dict(),
            "sweep": {k: list(v) for k, v in self.sweep.items()},
            "seed": self.seed,
            "replications": self.replications,
            "output_path": self.output_path,
            "r_bd_fraction": self.r_bd_fraction,
            "mc_samples": self.mc_samples,
            "snr_db": list(self.snr_db),
            "beta_hd_db": self.beta_hd_db,
            "precoder": self.precoder,
            "threads": self.threads,
        }


def default_config(figure=None):
    """Defaults for one figure (or for the single-realization commands)."""
    cfg = ExperimentConfig()
    if figure == 2:
        cfg.sweep = {"r_bd": [float(r) for r in np.linspace(0.0, 25.0, 51)]}
        cfg.replications = 1
    elif figure == 3:
        cfg.params.P_dbm = 0.0
        cfg.r_bd_fraction = 0.98
    elif figure in (4, 5):
        cfg.sweep = {"power_dbm": [0.0, 5.0, 10.0, 15.0, 20.0]}
        cfg.replications = 1
        cfg.r_bd_fraction = 0.98
    elif figure in (6, 7):
        cfg.r_bd_fraction = 0.98
    return cfg


def seed_seq(seed, *path):
    return np.random.SeedSequence([int(seed), *[int(p) for p in path]])


def _map(fn, items, threads):
    items = list(items)
    if threads is None or threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _mean_se(values):
    v = np.asarray(values, dtype=float)
    se = float(np.std(v, ddof=1) / np.sqrt(v.size)) if v.size > 1 else 0.0
    return float(np.mean(v)), se


def max_bd_rate(ch, params, opts):
    """``max_Q g(Q)`` over the trace-one PSD cone."""
    g = ConstraintRate(ch, params)
    if g.trivial:
        return 0.0
    _, val, *_ = _inner(g.value_and_grad, np.eye(ch.M_t, dtype=complex) / ch.M_t, opts)
    return float(val)


def resolve_threshold(cfg, ch, params, opts):
    if cfg.r_bd_fraction is None:
        return opts.r_bd
    return cfg.r_bd_fraction * max_bd_rate(ch, params, opts)


def _with(opts, **kw):
    d = opts.to_dict()
    d.update(kw)
    return SolveOptions(**d)


def _params(cfg, **kw):
    d = cfg.params.to_dict()
    d.update(kw)
    return SystemParams(**d)


def _require(cfg, key):
    if cfg.sweep_key != key:
        raise ConfigError(f"this figure sweeps {key}, not {cfg.sweep_key}")


def run_fig2(cfg):
    """Asymptotic primary rate versus BD sum rate for several SNRs (SIMO, LoS)."""
    _require(cfg, "r_bd")
    beta_hd = db_to_linear(cfg.beta_hd_db)
    rows = []
    for snr_db in cfg.snr_db:
        snr = db_to_linear(snr_db)
        for r in cfg.sweep_values:
            rows.append({"r_bd_asym": float(r), "P_bar": snr,
                         "r_s_asym": rs_of_rbd_los(r, snr, beta_hd, cfg.params.M_r, cfg.params.K)})
    return rows


def _fig3_job(args):
    cfg, J, rep = args
    params = _params(cfg, J=J)
    ch = sample_scenario(cfg.scenario, params, seed_seq(cfg.seed, CHANNEL, rep))
    r = resolve_threshold(cfg, ch, params, cfg.solver)
    out = {}
    for mode in ("sample_average", "upper_bound"):
        opts = _with(cfg.solver, mode=mode, r_bd=r)
        _, diag = solve_precoding(ch, params, opts, rng=seed_seq(cfg.seed, SOLVER, rep, J))
        out[mode] = (diag.wall_time_s, diag.iterations)
    return out


def run_fig3(cfg):
    """Mean solve time per mode versus J; always run serially."""
    _require(cfg, "J")
    rows = []
    for J in cfg.sweep_values:
        res = [_fig3_job((cfg, int(J), rep)) for rep in range(cfg.replications)]
        for mode in ("sample_average", "upper_bound"):
            mean, se = _mean_se([r[mode][0] for r in res])
            rows.append({"J": int(J), "mode": mode, "mean_wall_time": mean,
                         "wall_time_stderr": se,
                         "mean_iterations": float(np.mean([r[mode][1] for r in res]))})
    return rows


def _fig45_job(args):
    cfg, k, P_dbm = args
    params = _params(cfg, P_dbm=float(P_dbm))
    ch = sample_scenario(cfg.scenario, params, seed_seq(cfg.seed, CHANNEL, 0))
    r = resolve_threshold(cfg, ch, params, cfg.solver)
    covs = {}
    for mode in ("sample_average", "upper_bound"):
        opts = _with(cfg.solver, mode=mode, r_bd=r)
        covs[mode], _ = solve_precoding(ch, params, opts, rng=seed_seq(cfg.seed, SOLVER, 0, k))
    F = direct_link_matching(ch.H_d, params.snr, params.M_t)
    covs["direct_link"] = F @ F.conj().T
    rows = []
    for scheme, Q in covs.items():
        # common fresh samples across schemes at this power
        src = BDSymbolSource(params.constellation, np.random.default_rng(seed_seq(cfg.seed, EVAL, 0, k)))
        rs, se = primary_rate_mc(ch, Q, params, src, cfg.mc_samples)
        rows.append({"P_dbm": float(P_dbm), "scheme": scheme, "R_s": rs, "R_s_stderr": se,
                     "R_BD": bd_sumrate_kron(Q, ch, params, literal=False)})
    return rows


def run_fig4_5(cfg):
    """Primary and BD rates versus transmit power on one channel realization."""
    _require(cfg, "power_dbm")
    jobs = [(cfg, k, P) for k, P in enumerate(cfg.sweep_values)]
    return [row for rows in _map(_fig45_job, jobs, cfg.threads) for row in rows]


def _fig67_job(args):
    cfg, rep = args
    Js = [int(J) for J in cfg.sweep_values]
    full = sample_scenario(cfg.scenario, _params(cfg, J=max(Js)), seed_seq(cfg.seed, CHANNEL, rep))
    out = []
    for J in Js:
        params = _params(cfg, J=J)
        ch = full.subset(J)
        r = resolve_threshold(cfg, ch, params, cfg.solver)
        Q, _ = solve_precoding(ch, params, _with(cfg.solver, mode="upper_bound", r_bd=r))
        src = BDSymbolSource(params.constellation, np.random.default_rng(seed_seq(cfg.seed, EVAL, rep, J)))
        rs, _ = primary_rate_mc(ch, Q, params, src, cfg.mc_samples)
        out.append((rs, bd_sumrate_kron(Q, ch, params, literal=False)))
    return out


def fig6_7_samples(cfg):
    """Per-draw ``(R_s, R_BD)`` pairs, shape ``(replications, len(J sweep), 2)``."""
    _require(cfg, "J")
    return np.array(_map(_fig67_job, [(cfg, rep) for rep in range(cfg.replications)],
                         cfg.threads))


def run_fig6_7(cfg):
    """Mean primary and BD rates versus J over independent channel draws.

    BD ``j`` of a draw is shared by every ``J > j`` (nested drops).
    """
    per_rep = fig6_7_samples(cfg)
    rows = []
    for i, J in enumerate(cfg.sweep_values):
        rs, se_rs = _mean_se([rep[i][0] for rep in per_rep])
        rbd, se_bd = _mean_se([rep[i][1] for rep in per_rep])
        rows.append({"J": int(J), "mean_R_s": rs, "mean_R_s_stderr": se_rs,
                     "mean_R_BD": rbd, "mean_R_BD_stderr": se_bd})
    return rows


RUNNERS = {2: run_fig2, 3: run_fig3, 4: run_fig4_5, 5: run_fig4_5, 6: run_fig6_7, 7: run_fig6_7}


def run_figure(figure, cfg):
    if figure not in RUNNERS:
        raise ConfigError(f"unknown figure id {figure}")
    return RUNNERS[figure](cfg)


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def rows_to_csv(rows, columns):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row[c]) for c in columns])
    return buf.getvalue()


def sidecar(cfg, figure):
    return {
        "figure": figure,
        "version": __version__,
        # worker count and output path do not affect results
        "config": {k: v for k, v in cfg.to_dict().items() if k not in ("threads", "output_path")},
        "prng": {"algorithm": PRNG_NAME, "seeding": PRNG_SCHEME,
                 "streams": "SeedSequence([seed, stream, replication, ...]); "
                            "stream 0 channel, 1 solver samples, 2 evaluation samples"},
        "columns": FIGURE_COLUMNS[figure],
    }


def write_outputs(rows, cfg, figure, path):
    """Write the CSV and its ``.json`` sidecar; returns the CSV text."""
    text = rows_to_csv(rows, FIGURE_COLUMNS[figure])
    path = path or cfg.output_path
    if path:
        with open(path, "w", newline="") as fh:
            fh.write(text)
        side = str(path).rsplit(".", 1)[0] + ".json" if str(path).endswith(".csv") else str(path) + ".json"
        with open(side, "w") as fh:
            json.dump(sidecar(cfg, figure), fh, indent=2, sort_keys=True)
            fh.write("\n")
    return text
