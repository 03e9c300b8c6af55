"""Command-line entry point.

Subcommands map one-to-one onto the pipeline stages: resolve, diagnose,
stats, les, triptych, verify-i (closure-mismatch ordering over an
ensemble), verify-ii (shrinking-filter convergence). All numeric outputs
land as CSV and field snapshots under --out; identical config and seed
reproduce identical bytes.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import harness
from .harness import (
    ConfigError,
    MissingStageError,
    load_config,
    load_series,
    load_trajectory,
)
from .sgs import estimate_stats

__all__ = ["main"]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qgles", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="experiment config file")
        p.add_argument("--seed", type=int, default=None, help="override master_seed")
        p.add_argument("--out", default=None, help="override out_dir")
        p.add_argument("--ensemble", type=int, default=None, help="override ensemble_size")
        return p

    add("resolve", "run the resolved fine-grid simulation")
    add("diagnose", "diagnose the subgrid stress from a resolved run")
    add("stats", "estimate statistics of the diagnosed stress")
    p_les = add("les", "run one coarse LES with a chosen closure")
    p_les.add_argument("--closure", default=None, help="closure name (default: first configured)")
    add("triptych", "resolved vs unparameterized vs replay coarse runs")
    add("verify-i", "closure-mismatch ordering over an ensemble")
    add("verify-ii", "shrinking-filter convergence sweep")
    return parser


def _load(args) -> harness.ExperimentConfig:
    overrides = {}
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if args.out is not None:
        overrides["out_dir"] = args.out
    if args.ensemble is not None:
        overrides["ensemble_size"] = args.ensemble
    return load_config(args.config, overrides)


def _require_stage(config, stage: str) -> Path:
    if not config.out_dir:
        raise ConfigError("this subcommand needs an output directory (--out or out_dir)")
    directory = Path(config.out_dir) / stage
    if not (directory / "manifest.txt").is_file():
        raise MissingStageError(
            f"stage '{stage}' missing in {config.out_dir}; run the upstream subcommand first"
        )
    return directory


def _cmd_resolve(config) -> int:
    trajectory = harness.run_resolved(config)
    print(f"resolve: {trajectory.times.size} snapshots -> {config.out_dir or '(memory)'}")
    return 0


def _cmd_diagnose(config) -> int:
    directory = _require_stage(config, "resolved")
    forcing = config.forcing_fine()
    import numpy as np

    f_norm_sq = float(np.sum(forcing.values**2) * config.fine_grid.cell_area)
    trajectory = load_trajectory(directory, f_norm_sq)
    series = harness.diagnose(config, trajectory)
    print(f"diagnose: {len(series)} stress snapshots, delta={config.delta!r}")
    return 0


def _cmd_stats(config) -> int:
    directory = _require_stage(config, "sgs")
    series = load_series(directory)
    stats = estimate_stats(series)
    harness.save_stats(stats, Path(config.out_dir) / "stats")
    print(f"stats: tau={stats.tau!r}")
    return 0


def _cmd_les(config, closure: str | None) -> int:
    name = closure or config.closures[0]
    trajectory = harness.run_les(config, name)
    print(f"les[{name}]: {trajectory.times.size} snapshots")
    return 0


def _cmd_triptych(config) -> int:
    result = harness.run_triptych(config)
    print(f"triptych: e_null_psi={result.e_null_psi!r} e_stoch_psi={result.e_stoch_psi!r}")
    return 0


def _cmd_verify_i(config) -> int:
    report = harness.verify_approximation(config)
    for row in report.rows:
        print(
            f"verify-i[{row.name}]: rhs={row.rhs!r} sup_lhs={row.sup_lhs!r} "
            f"members={row.n_members} bounded={row.bounded}"
        )
    ok = report.ordering_consistent() and all(r.bounded for r in report.rows)
    print(f"verify-i: {'PASS' if ok else 'FAIL'} (ordering within 2x slack)")
    return 0 if ok else 1


def _cmd_verify_ii(config) -> int:
    report = harness.verify_scale_convergence(config)
    for delta, sig, err in report.rows:
        print(f"verify-ii[delta={delta!r}]: sigma_sq_integral={sig!r} sup_err_sq={err!r}")
    ok = report.sigma_decreasing and report.error_decreasing
    print(f"verify-ii: {'PASS' if ok else 'FAIL'} (both columns strictly decreasing)")
    return 0 if ok else 1


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        config = _load(args)
        if args.command == "resolve":
            return _cmd_resolve(config)
        if args.command == "diagnose":
            return _cmd_diagnose(config)
        if args.command == "stats":
            return _cmd_stats(config)
        if args.command == "les":
            return _cmd_les(config, args.closure)
        if args.command == "triptych":
            return _cmd_triptych(config)
        if args.command == "verify-i":
            return _cmd_verify_i(config)
        if args.command == "verify-ii":
            return _cmd_verify_ii(config)
        raise AssertionError(f"unhandled command {args.command}")
    except Exception as exc:  # one-line machine-parsable failure
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
