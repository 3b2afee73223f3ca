"""Command-line entry point: ``rggspec {probe,homogenize,spectrum,converge,mc-check}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import experiments
from .config import load
from .errors import ConfigError
from .output import CONVERGE_HEADER, write_csv, write_json
from .plotting import write_rate_plot

log = logging.getLogger("rggspec")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="TOML experiment config")
    common.add_argument("--dim", type=int)
    common.add_argument("--alpha", type=float, help="Poisson intensity")
    common.add_argument("--m", type=int, action="append", dest="m_list", metavar="M",
                        help="scale exponent (repeatable); box side is 3**M")
    common.add_argument("--k-max", type=int, dest="k_max")
    common.add_argument("--trials", type=int)
    common.add_argument("--seed", type=int, dest="master_seed", help="master seed (u64)")
    common.add_argument("--tol", type=float, dest="tol_solver", help="linear solver tolerance")
    common.add_argument("--out", dest="out_dir", metavar="DIR")
    common.add_argument("--format", choices=("csv", "json"))
    common.add_argument("--svg", action="store_true", default=None,
                        help="also write log-log rate plots")
    common.add_argument("-v", "--verbose", action="store_true")

    # flags live on the subcommands so they are parsed after the command name
    p = argparse.ArgumentParser(prog="rggspec", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("probe", parents=[common], help="percolation spanning probe")
    sub.add_parser("homogenize", parents=[common], help="effective coefficient estimates")
    sp = sub.add_parser("spectrum", parents=[common], help="one discrete spectrum vs continuum")
    sp.add_argument("--sample-seed", type=int, dest="sample_seed",
                    help="cloud seed (default: split of the master seed)")
    sub.add_parser("converge", parents=[common], help="full convergence study")
    sub.add_parser("mc-check", parents=[common], help="Monte-Carlo concentration check")
    return p


_OVERRIDES = ("dim", "alpha", "m_list", "k_max", "trials", "master_seed", "tol_solver",
              "out_dir", "format", "svg")


def _emit_table(cfg, name, rows, header=None):
    out = Path(cfg.out_dir)
    if cfg.format == "json":
        return write_json(out / f"{name}.json", {"config": cfg.as_dict(), "records": rows})
    if header is None:
        header = list(rows[0].keys()) if rows else []
    return write_csv(out / f"{name}.csv", header, rows)


def _cmd_converge(cfg):
    report = experiments.run_converge(cfg)
    out = Path(cfg.out_dir)
    paths = [write_json(out / "converge.json", report)]
    if cfg.format == "csv":
        paths.append(write_csv(out / "converge.csv", CONVERGE_HEADER, report["records"]))
    if cfg.svg:
        for metric in ("rel_eig_err", "l2_vec_err"):
            paths.append(write_rate_plot(out / f"converge_{metric}.svg", report["records"],
                                         metric, title=f"d={cfg.dim}, alpha={cfg.alpha:g}"))
    return paths, report["failure_count"]


def _cmd_mc(cfg):
    recs = experiments.run_mc_check(cfg)
    rows = []
    for r in recs:
        dev = np.asarray(r.deviations)
        rows.append({"m": r.m, "k": r.k, "trials": r.trials, "threshold": r.threshold,
                     "empirical_exceed_rate": r.empirical_exceed_rate,
                     "bernstein_bound": r.bernstein_bound,
                     "median_deviation": float(np.median(dev)) if dev.size else float("nan"),
                     "sigma2": r.sigma2, "cluster_size_min": r.cluster_size_min,
                     "failures": r.failures})
    out = Path(cfg.out_dir)
    if cfg.format == "json":
        return [write_json(out / "mc_check.json", {"config": cfg.as_dict(), "records": rows,
                                                   "concentration": [r.as_dict() for r in recs]})]
    return [write_csv(out / "mc_check.csv", list(rows[0].keys()), rows)]


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {k: getattr(args, k) for k in _OVERRIDES}
    try:
        cfg = load(args.config, overrides)
        if args.command == "mc-check" and cfg.trials < 20:
            raise ConfigError(f"field 'trials': mc-check needs at least 20 trials, "
                              f"got {cfg.trials}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    failures = 0
    try:
        if args.command == "probe":
            paths = [_emit_table(cfg, "probe", experiments.run_probe(cfg))]
        elif args.command == "homogenize":
            paths = [_emit_table(cfg, "homogenize", experiments.run_homogenize(cfg))]
        elif args.command == "spectrum":
            res = experiments.run_spectrum(cfg, seed=args.sample_seed)
            paths = [write_json(Path(cfg.out_dir) / "spectrum.json", res)]
        elif args.command == "converge":
            paths, failures = _cmd_converge(cfg)
        else:
            paths = _cmd_mc(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - reported with exit code 2
        log.exception("run failed")
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for p in paths:
        print(p)
    if failures:
        print(f"{failures} trial failures logged", file=sys.stderr)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
