"""Command-line entry point.

Subcommands: ``run`` (one experiment), ``compare`` (the 3x3 strategy x
uncertainty grid), ``bounds`` (analytic report), ``lstar`` (nominal
receding-horizon study).
"""

from __future__ import annotations

import argparse
import sys

from .config import ExperimentConfig, config_from_file
from .harness import compare_tables, emit_bounds_report, run_experiment, run_lstar_study
from .solver import SolverFailure


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="path to a key = value config file")
    p.add_argument("--seed", type=int, help="master seed override")
    p.add_argument("--trials", type=int, help="trial count override")
    p.add_argument("--out", help="output directory override")
    p.add_argument(
        "--algorithm", choices=("qtompc", "tompc", "grape"), help="algorithm override"
    )
    p.add_argument(
        "--uncertainty",
        choices=("none", "periodic", "uniform", "gaussian"),
        help="uncertainty model override",
    )


def _load_config(args) -> ExperimentConfig:
    cfg = config_from_file(args.config) if args.config else ExperimentConfig()
    return cfg.with_overrides(
        seed=args.seed,
        trials=args.trials,
        out=args.out,
        algorithm=args.algorithm,
        uncertainty=args.uncertainty,
    )


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="qtompc",
        description="Measured time-optimal MPC for qubit state transfer",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment")
    _add_common(p_run)

    p_cmp = sub.add_parser("compare", help="run the 3x3 strategy/uncertainty grid")
    _add_common(p_cmp)

    p_bounds = sub.add_parser("bounds", help="emit the analytic bounds report")
    p_bounds.add_argument("--out", default="results")
    p_bounds.add_argument("--seed", type=int, default=1)
    p_bounds.add_argument("--draws", type=int, default=2000)

    p_lstar = sub.add_parser("lstar", help="nominal receding-horizon study")
    _add_common(p_lstar)

    args = parser.parse_args(argv)

    if args.command == "bounds":
        grid = []
        for L in (2, 5, 10):
            grid.extend(
                [
                    (0.3, L, 4 * L),
                    (L / (L + 1), L, 4 * L),
                    (0.9975, L, 4 * L),
                    (1.0, L, 4 * L),
                ]
            )
        rows = emit_bounds_report(grid, args.out, coin_draws=args.draws, seed=args.seed)
        for row in rows:
            print(
                f"c={row['c']:.6f} L={row['L']} case={row['case']} eta={row['eta']:.6f} "
                f"root={row['max_other_root']:.6f} bound={row['p_tar_bound']:.6f} "
                f"mc={row['coin_mc']:.4f}"
            )
        print(f"wrote {args.out}/bounds_report.csv")
        return 0

    config = _load_config(args)
    try:
        if args.command == "run":
            result = run_experiment(config)
            m = result.summary.metrics
            print(
                f"{config.algorithm}/{config.uncertainty}: "
                f"e_track mean={m['e_track']['mean']:.6g} "
                f"infidelity mean={m['infidelity']['mean']:.6g} "
                f"(n={m['e_track']['n']})"
            )
            for name, path in result.files.items():
                print(f"wrote {path}")
        elif args.command == "compare":
            results = compare_tables(config)
            for (algo, unc), res in results.items():
                m = res.summary.metrics
                print(
                    f"{algo:>7}/{unc:<9} e_track={m['e_track']['mean']:.6g} "
                    f"infidelity={m['infidelity']['mean']:.6g}"
                )
            print(f"wrote {config.out}/tables.csv and tables.txt")
        else:  # lstar
            chain = run_lstar_study(config)
            reach = next(
                (k for k in range(chain.n_steps) if chain.fid_target[k] >= 1 - config.eps_f),
                None,
            )
            print(f"nominal run reaches the target at step {reach}")
            print(f"wrote {config.out}/lstar_study.csv")
    except SolverFailure as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
