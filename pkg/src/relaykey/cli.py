"""``relaykey`` command line: table1, optimize, sweep, simulate, validate.

Exit codes: 0 success, 1 numerical or validation failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import math
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from . import rate
from .buffer import SchemeKind
from .config import ConfigError, fmt, load_config, schema_help, write_csv
from .optimize import (NoRootError, UnimodalityWarning, optimize_keyrate_constrained, optimize_throughput_grid,
                       optimize_throughput_lb, table1)
from .simulator import (ExperimentConfig, KeySource, OutageModel, default_workers, optimize_practical_beta,
                        practical_point, run_experiment)
from .validate import run_validation

TABLE1_HEADER = ("c_R", "rho_dB", "beta_opt", "beta_star")
OPTIMIZE_HEADER = ("method", "c", "rho_dB", "beta", "objective", "iterations", "converged")
SWEEP_HEADER = ("value", "c", "rho_dB", "beta", "M", "P_out", "theta", "theta_lb")
PRACTICAL_HEADER = ("e_nxor", "p_out_practical", "objective_practical")
ROUND_HEADER = ("m", "mean_nxor", "nxor_stderr", "throughput")
SUMMARY_HEADER = ("beta", "throughput", "throughput_stderr", "outage_rate", "outage_stderr",
                  "mean_nar", "mean_nbr", "mismatch_rate", "recovery_failures", "analytic_theta")
TRAJECTORY_HEADER = ("m", "n_ar", "n_br", "n_xor", "buffer_after", "outage", "delivered_bits")


def _experiment(cfg: dict, **extra) -> ExperimentConfig:
    try:
        return ExperimentConfig(
            c_ar=cfg["c_ar"], c_br=cfg.get("c_br"), rho_db=cfg["rho_db"], beta=cfg.get("beta", 0.5),
            L=cfg["L"], rounds=cfg["rounds"], trials=cfg.get("trials", 1), scheme=SchemeKind.parse(cfg["scheme"]),
            epsilon=cfg["epsilon"], outage_model=OutageModel.parse(cfg["outage_model"]),
            seed=cfg.get("seed", 0), key_source=KeySource(cfg.get("key_source", "practical")),
            nlos_scale=cfg["nlos_scale"], **extra)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def cmd_table1(args, cfg) -> int:
    rows = table1(nlos_scale=cfg["nlos_scale"])
    write_csv(args.output, TABLE1_HEADER, rows)
    return 0


def cmd_optimize(args, cfg) -> int:
    c, rho = cfg["c_ar"], float(rate.db_to_linear(cfg["rho_db"]))
    ns = cfg["nlos_scale"]
    method = cfg["method"]
    if method == "grid":
        res = optimize_throughput_grid(c, rho, ns)
    elif method == "lb":
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", UnimodalityWarning)
            res = optimize_throughput_lb(c, rho, ns)
        for w in caught:
            print(f"warning: {w.message}", file=sys.stderr)
    elif method == "constrained":
        res = optimize_keyrate_constrained(c, rho, cfg["eta"], ns)
    elif method == "practical":
        beta, val = optimize_practical_beta(_experiment(cfg))
        write_csv(args.output, OPTIMIZE_HEADER, [("practical", c, cfg["rho_db"], beta, val, 0, 1)])
        return 0
    else:
        raise ConfigError(f"unknown method {method!r}")
    write_csv(args.output, OPTIMIZE_HEADER,
              [(res.method.value, c, cfg["rho_db"], res.beta_star, res.objective_value, res.iterations,
                res.converged)])
    return 0


def _sweep_row(job):
    value, c, rho_db, beta, ns, exp = job
    rho = float(rate.db_to_linear(rho_db))
    if beta >= 1.0 or beta <= 0.0:
        raise ConfigError("swept beta must lie in (0, 1)")
    rep = rate.throughput(c, rho, beta, ns)
    lb = rep.theta_lb if c < 1 else math.nan
    row = [value, c, rho_db, beta, rep.M, rep.p_out, rep.theta, lb]
    if exp is not None:
        row += list(practical_point(replace(exp, c_ar=c, c_br=c, rho_db=rho_db), beta))
    return row


def _grid(cfg) -> np.ndarray:
    start, stop, step = cfg["start"], cfg["stop"], cfg["step"]
    if step <= 0 or stop < start:
        raise ConfigError("sweep needs step > 0 and stop >= start")
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return np.round(start + step * np.arange(n), 12)


def cmd_sweep(args, cfg) -> int:
    var = cfg["sweep_var"]
    if var not in ("beta", "c", "rho_db"):
        raise ConfigError(f"sweep_var must be beta, c or rho_db, not {var!r}")
    if var != "beta" and cfg["beta"] == "optimize":
        raise ConfigError("a fixed numeric beta is needed when sweeping c or rho_db")
    exp = _experiment(dict(cfg, beta=0.5)) if cfg["practical"] else None
    jobs = []
    for v in _grid(cfg):
        c = v if var == "c" else cfg["c_ar"]
        rho_db = v if var == "rho_db" else cfg["rho_db"]
        beta = v if var == "beta" else cfg["beta"]
        jobs.append((float(v), float(c), float(rho_db), float(beta), cfg["nlos_scale"], exp))
    workers = args.threads or default_workers()
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_row, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        rows = [_sweep_row(j) for j in jobs]
    header = SWEEP_HEADER + (PRACTICAL_HEADER if exp is not None else ())
    write_csv(args.output, header, rows)
    return 0


def cmd_simulate(args, cfg) -> int:
    exp = _experiment(cfg)
    rep = run_experiment(exp, workers=args.threads or None, keep_trajectory=bool(args.trajectory))
    rows = [(m + 1, rep.mean_nxor_per_round[m], rep.nxor_stderr_per_round[m], rep.throughput_per_round[m])
            for m in range(exp.rounds)]
    write_csv(args.output, ROUND_HEADER, rows)
    theta = rep.analytic_reference.theta if rep.analytic_reference else math.nan
    summary = [(rep.beta_used, rep.throughput_estimate, rep.throughput_stderr, rep.outage_rate, rep.outage_stderr,
                rep.mean_nar, rep.mean_nbr, rep.mismatch_rate, rep.recovery_failures, theta)]
    if args.summary:
        write_csv(args.summary, SUMMARY_HEADER, summary)
    else:
        for k, v in zip(SUMMARY_HEADER, summary[0]):
            print(f"{k}={fmt(v)}", file=sys.stderr)
    if args.trajectory:
        write_csv(args.trajectory, TRAJECTORY_HEADER,
                  [(o.m, o.n_ar, o.n_br, o.n_xor, o.buffer_after, o.outage, o.delivered_bits)
                   for o in rep.trajectory])
    return 0 if rep.recovery_failures == 0 else 1


def cmd_validate(args, cfg) -> int:
    results = run_validation(marcum_offset=args.perturb_marcum)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name}: {r.detail} [{r.seconds:.1f} s]")
    return 0 if all(r.passed for r in results) else 1


COMMANDS = {"table1": cmd_table1, "optimize": cmd_optimize, "sweep": cmd_sweep,
            "simulate": cmd_simulate, "validate": cmd_validate}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="relaykey", description="Buffer-aided relay key generation: analysis and simulation.",
        epilog=schema_help() + "\n\nenvironment:\n  RELAYKEY_THREADS  default worker count (--threads overrides)",
        formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="verb", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, epilog=schema_help(), formatter_class=argparse.RawDescriptionHelpFormatter)
        if name != "validate":
            p.add_argument("-c", "--config", help="JSON config file")
            p.add_argument("-s", "--set", action="append", default=[], metavar="KEY=VALUE",
                           help="override one config key (repeatable)")
            p.add_argument("-o", "--output", default="-", help="CSV output path (default: stdout)")
        p.add_argument("--threads", type=int, default=0, help="worker processes (overrides RELAYKEY_THREADS)")
        if name == "simulate":
            p.add_argument("--summary", help="CSV path for the one-row run summary")
            p.add_argument("--trajectory", help="CSV path for the per-round trace of trial 0")
        if name == "validate":
            p.add_argument("--perturb-marcum", type=float, default=0.0, help=argparse.SUPPRESS)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.threads < 0:
            raise ConfigError("--threads must be non-negative")
        try:
            default_workers()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        cfg = {} if args.verb == "validate" else load_config(args.verb, args.config, args.set)
        return COMMANDS[args.verb](args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (NoRootError, ArithmeticError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
