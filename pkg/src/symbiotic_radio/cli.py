"""Command-line front end.

Results go to stdout (or ``--out``) and are byte-identical for a fixed seed;
timings are only logged to stderr.
"""

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from .asymptotics import AsymParams, bd_sumrate_asym, primary_rate_asym, rs_of_rbd, simo_asym
from .channel import dbm_to_watt, los_channel, pathloss, sample_scenario
from .config import load_config
from .errors import ConfigError, Infeasible, NoConvergence
from .experiments import CHANNEL, EVAL, SOLVER, resolve_threshold, run_figure, seed_seq, write_outputs
from .precoder import covariance_to_precoder, direct_link_matching, solve_precoding
from .rates import BDSymbolSource, bd_effective_vectors, mmse_sic, primary_rate_mc

log = logging.getLogger("symbiotic_radio")

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_NOCONV = 0, 2, 3, 4


def _cmatrix(A):
    A = np.asarray(A)
    return {"real": np.real(A).tolist(), "imag": np.imag(A).tolist()}


def _emit(obj, out):
    text = json.dumps(obj, indent=2) + "\n"
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_rates(cfg, args):
    p = cfg.params
    ch = sample_scenario(cfg.scenario, p, seed_seq(cfg.seed, CHANNEL, 0))
    if cfg.precoder == "direct_link":
        F = direct_link_matching(ch.H_d, p.snr, p.M_t)
    else:
        F = np.eye(p.M_t, dtype=complex) / np.sqrt(p.M_t)
    Q = F @ F.conj().T
    report = mmse_sic(bd_effective_vectors(ch, F, p), dbm_to_watt(p.sigma2_dbm), p.K)
    src = BDSymbolSource(p.constellation, np.random.default_rng(seed_seq(cfg.seed, EVAL, 0)))
    report.primary_rate_bits, report.primary_rate_stderr = primary_rate_mc(ch, Q, p, src,
                                                                          cfg.mc_samples)
    out = report.to_dict()
    if not np.isfinite(out["primary_rate_stderr"]):
        out["primary_rate_stderr"] = None
    _emit({"seed": cfg.seed, "precoder": cfg.precoder, "J": p.J, **out}, args.out)


def cmd_asym(cfg, args):
    sc, p = cfg.scenario, cfg.params
    pt, c = np.asarray(sc.pt_position), np.asarray(sc.bd_center)
    ap_pos = np.asarray(sc.ap_position)
    beta_h = pathloss(np.hypot(*(c - pt)), sc.gamma_tb, sc.carrier_hz)
    beta_hd = pathloss(np.hypot(*(ap_pos - pt)), sc.gamma_ta, sc.carrier_hz)
    ap = AsymParams(p.J, p.K, p.M_t, p.M_r, p.snr, p.alpha, beta_h, sc.cascade_scale, beta_hd)
    H_d = los_channel(sc, p.M_t, p.M_r)
    r_bd = bd_sumrate_asym(np.eye(p.M_t) / p.M_t, ap)
    r_s, F, alloc = primary_rate_asym(H_d, ap)
    simo = AsymParams(p.J, p.K, 1, p.M_r, p.snr, p.alpha, beta_h, sc.cascade_scale, beta_hd)
    r_bd1, r_s1 = simo_asym(simo, beta_hd * p.M_r)
    _emit({
        "asym_params": {"J": p.J, "K": p.K, "M_t": p.M_t, "M_r": p.M_r, "snr": p.snr,
                        "alpha": p.alpha, "beta_h": beta_h, "beta_g": sc.cascade_scale,
                        "beta_hd": beta_hd},
        "r_bd_uniform_Q": r_bd,
        "r_s": r_s,
        "power_allocation": alloc.p.tolist(),
        "F": _cmatrix(F),
        "simo_r_bd": r_bd1,
        "simo_r_s": r_s1,
        "simo_r_s_from_r_bd": rs_of_rbd(r_bd1, p.snr, beta_hd * p.M_r, p.M_r, p.K),
    }, args.out)


def cmd_optimize(cfg, args):
    p = cfg.params
    ch = sample_scenario(cfg.scenario, p, seed_seq(cfg.seed, CHANNEL, 0))
    r = resolve_threshold(cfg, ch, p, cfg.solver)
    opts = cfg.solver.from_dict({**cfg.solver.to_dict(), "r_bd": r})
    Q, diag = solve_precoding(ch, p, opts, rng=seed_seq(cfg.seed, SOLVER, 0))
    log.info("solve took %.3f s", diag.wall_time_s)
    F, M_s = covariance_to_precoder(Q)
    _emit({"seed": cfg.seed, "mode": opts.mode, "r_bd": r, "Q": _cmatrix(Q), "F": _cmatrix(F),
           "M_s": M_s, "diagnostics": diag.to_dict(timing=False)}, args.out)


def cmd_figure(cfg, args):
    rows = run_figure(args.id, cfg)
    text = write_outputs(rows, cfg, args.id, args.out)
    if not (args.out or cfg.output_path):
        sys.stdout.write(text)


COMMANDS = {"rates": cmd_rates, "asym": cmd_asym, "optimize": cmd_optimize, "figure": cmd_figure}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="symbiotic-radio",
        description="Rates, asymptotics and precoding for MIMO symbiotic radio.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0,
                        help="log to stderr (-v info, -vv debug)")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file; missing keys take defaults")
    common.add_argument("--seed", type=int, help="base seed (overrides the config)")
    common.add_argument("--out", help="output file (default: stdout)")
    common.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                        help="worker processes for replications (default: machine cores)")
    common.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE",
                        help="override a config entry, e.g. params.J=10 (repeatable)")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("rates", parents=[common], help="exact rates for one channel realization")
    sub.add_parser("asym", parents=[common], help="large-J closed-form rates")
    sub.add_parser("optimize", parents=[common], help="solve the rate-constrained precoding problem")
    fig = sub.add_parser("figure", parents=[common], help="run one figure experiment, CSV out")
    fig.add_argument("--id", type=int, required=True, choices=range(2, 8), help="2: rate trade-off curves, 3: solve time vs J, "
                          "4/5: rates vs power, 6/7: mean rates vs J")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=[logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)],
                        stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, getattr(args, "id", None), args.overrides)
        if args.seed is not None:
            cfg.seed = args.seed
        cfg.threads = max(1, args.threads)
        COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Infeasible as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except NoConvergence as exc:
        print(f"no convergence: {exc}", file=sys.stderr)
        return EXIT_NOCONV
    return EXIT_OK
