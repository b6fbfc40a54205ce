"""Fixed-point iteration against conjugate gradients: contraction, residual and agreement."""

import dataclasses
import warnings

from wavefocus.control_iter import NonConvergenceWarning, iterate_cutoff, normal_residual, solve_direct
from wavefocus.experiments import build_setup, cutoff_mask, iteration_config
from wavefocus.storage import write_csv

from _common import load, parser


def main():
    p = parser(__doc__, "cutoff_1d.toml")
    p.add_argument("--alphas", type=float, nargs="+", default=[1e-1, 1e-2])
    p.add_argument("--max-iter", type=int, default=100_000)
    args = p.parse_args()
    config, out = load(args)
    setup = build_setup(config)
    mask, _ = cutoff_mask(setup)
    rows = []
    for alpha in args.alphas:
        it = dataclasses.replace(iteration_config(config, alpha), max_iter=args.max_iter)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NonConvergenceWarning)
            x, report = iterate_cutoff(setup.oracle, setup.source, mask, it, diameter=setup.diameter)
        direct, cg = solve_direct(setup.oracle, setup.source, mask, alpha, tol=1e-12)
        residual = normal_residual(setup.oracle, setup.source, mask, alpha, x)
        agreement = (x - direct).norm() / direct.norm()
        rows.append(
            (alpha, report.omega, report.iterations, report.converged, report.contraction_ratio,
             report.contraction_bound, residual, agreement, cg.iterations, report.wall_time)
        )
        print(
            f"alpha={alpha:g} omega={report.omega:.2f} iterations={report.iterations} "
            f"ratio={report.contraction_ratio:.6f} bound={report.contraction_bound:.6f} "
            f"residual={residual:.2e} agreement={agreement:.2e} cg_iterations={cg.iterations}"
        )
    columns = ("alpha", "omega", "iterations", "converged", "contraction_ratio", "contraction_bound",
               "residual", "agreement", "cg_iterations", "wall_time")
    write_csv(out / "contraction.csv", columns, rows, config.config_hash())
    print(f"results in {out}")


if __name__ == "__main__":
    main()
