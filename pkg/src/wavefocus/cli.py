"""Command-line entry point: ``wavefocus <subcommand> --config PATH``.

Exit codes: 0 success, 2 configuration error, 3 non-convergence,
4 resource budget exceeded.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
import warnings
from pathlib import Path

from .config import ConfigError, ExperimentConfig, load_config
from .control_iter import NonConvergenceWarning, iterate_cutoff
from .domain import cut_time
from .experiments import (
    build_setup,
    cutoff_mask,
    iteration_config,
    run_blago_check,
    run_cutoff,
    run_focus,
    run_sweep,
)
from .storage import write_csv
from .wave_sim import ResourceBudgetError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NONCONVERGENCE = 3
EXIT_BUDGET = 4

log = logging.getLogger("wavefocus")


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML experiment file (defaults apply when omitted)")
    common.add_argument("--out", type=Path, help="output directory, overrides output_dir")
    common.add_argument("--threads", type=int, default=1, help="parallel schedule points")
    common.add_argument("--resolution-scale", type=int, default=1, help="refine the grid k times")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="wavefocus", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("blago-check", parents=[common], help="boundary vs interior pairing study")
    sub.add_parser("cutoff", parents=[common], help="cutoff sources over the alpha schedule")
    sub.add_parser("focus", parents=[common], help="focusing sources and delta tests")
    sweep = sub.add_parser("sweep", parents=[common], help="one schedule axis point by point")
    sweep.add_argument("--axis", choices=("alpha", "eps"), help="overrides sweep.axis")
    count = sub.add_parser("oracle-count", parents=[common], help="oracle calls per iteration")
    count.add_argument("--iterations", type=int, default=5)
    sub.add_parser("grid-info", parents=[common], help="grid, lattice and travel-time summary")
    return parser


def _load(args) -> tuple[ExperimentConfig, Path]:
    config = load_config(args.config) if args.config else ExperimentConfig()
    out = args.out if args.out is not None else Path(config.output_dir)
    if args.threads < 1:
        raise ConfigError(["--threads: must be at least 1"])
    if args.resolution_scale < 1:
        raise ConfigError(["--resolution-scale: must be at least 1"])
    return config, out


def _cmd_blago(config, out, args) -> int:
    result = run_blago_check(config, out, args.resolution_scale)
    for scale, err in sorted(result.median_error.items()):
        print(f"resolution x{scale}: median relative error {err:.3e}")
    print(f"refinement ratio {result.ratio:.3f}, order {result.order:.3f}")
    print(f"lattice-rule max error {result.lattice_max_error:.3e}")
    return EXIT_OK


def _cmd_cutoff(config, out, args) -> int:
    setup = build_setup(config, args.resolution_scale)
    rows = run_cutoff(config, out, setup=setup, threads=args.threads)
    for r in rows:
        print(
            f"alpha={r.alpha:g} iterations={r.iterations} converged={r.converged} "
            f"rel_error={r.rel_error:.4f} velocity={r.velocity_centered:.4f} oracle_calls={r.oracle_calls}"
        )
    return EXIT_OK if all(r.converged for r in rows) else EXIT_NONCONVERGENCE


def _cmd_focus(config, out, args) -> int:
    setup = build_setup(config, args.resolution_scale)
    run = run_focus(config, out, setup=setup)
    print(f"lens constant {run.constant:.4f} +- {run.constant_uncertainty:.4f}")
    for rec in run.select(phi_id="const"):
        print(
            f"{rec['case']} alpha={rec['alpha']:g} j={rec['j']} eps={rec['eps']:.4g} "
            f"ratio={rec['ratio']:.4f} mass_fraction={rec['mass_fraction']:.3f} l1={rec['l1_norm']:.4g}"
        )
    if config.focus.control_t_hat_diam > 0:
        print(f"control/admissible L1 ratio {run.l1_ratio():.4f}")
    return EXIT_OK if all(rec["converged"] for rec in run.select()) else EXIT_NONCONVERGENCE


def _cmd_sweep(config, out, args) -> int:
    path = run_sweep(config, out, args.axis, threads=args.threads, resolution_scale=args.resolution_scale)
    print(f"wrote {path}")
    return EXIT_OK


def _cmd_oracle_count(config, out, args) -> int:
    setup = build_setup(config, args.resolution_scale)
    mask, _ = cutoff_mask(setup)
    alpha = config.cutoff.alphas[0]
    rows = []
    for sharing in ("naive", "shared"):
        it = dataclasses.replace(
            iteration_config(config, alpha), sharing=sharing, max_iter=args.iterations, tol=0.0, residual_tol=0.0
        )
        view = setup.oracle.view()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NonConvergenceWarning)
            _, report = iterate_cutoff(view, setup.source, mask, it)
        per = 10 if sharing == "naive" else 6
        for n, calls in enumerate(report.oracle_calls, start=1):
            rows.append((sharing, n, calls, 2 + per * n))
            print(f"{sharing} n={n} calls={calls} expected={2 + per * n}")
    write_csv(out / "oracle_count.csv", ("sharing", "iteration", "calls", "expected"), rows, config.config_hash())
    return EXIT_OK if all(r[2] == r[3] for r in rows) else 1


def _cmd_grid_info(config, out, args) -> int:
    setup = build_setup(config, args.resolution_scale)
    grid, lat = setup.grid, setup.lattice
    print(f"dimension {grid.dim}, nodes {grid.shape}, spacing {tuple(float(h) for h in grid.spacing)}")
    print(f"boundary nodes {grid.n_boundary}, diameter {setup.diameter:.6f}")
    print(f"T {lat.horizon:.6f}, dt {lat.dt:.6g}, half steps {lat.half_steps}, samples {lat.n_times}")
    print(f"oracle backend {setup.oracle.backend}")
    z = config.focus.z
    try:
        tau = cut_time(grid, z)
        print(f"critical time at boundary node {z}: {tau.value:.6f}{' (truncated)' if tau.truncated else ''}")
    except ValueError as exc:
        print(f"critical time at boundary node {z}: unavailable ({exc})")
    return EXIT_OK


COMMANDS = {
    "blago-check": _cmd_blago,
    "cutoff": _cmd_cutoff,
    "focus": _cmd_focus,
    "sweep": _cmd_sweep,
    "oracle-count": _cmd_oracle_count,
    "grid-info": _cmd_grid_info,
}


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        config, out = _load(args)
        return COMMANDS[args.command](config, out, args)
    except ConfigError as exc:
        for err in exc.errors:
            print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except ResourceBudgetError as exc:
        print(f"resource budget: {exc}", file=sys.stderr)
        return EXIT_BUDGET


if __name__ == "__main__":
    sys.exit(main())
