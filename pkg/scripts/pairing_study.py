"""Boundary-vs-interior pairing errors under grid refinement, plus the adjoint identity."""

import numpy as np

from wavefocus.boundary_ops import time_reverse
from wavefocus.experiments import build_setup, run_blago_check
from wavefocus.signals import random_smooth_signal

from _common import load, parser


def main():
    p = parser(__doc__, "blago_1d.toml")
    p.add_argument("--oracle", choices=("cached", "on_the_fly"), help="overrides the oracle backend")
    args = p.parse_args()
    config, out = load(args)
    if args.oracle:
        config = config.replace(oracle=args.oracle)
    result = run_blago_check(config, out)
    for scale, err in sorted(result.median_error.items()):
        print(f"x{scale}: median relative error {err:.3e}")
    print(f"reduction {result.ratio:.2f}x, order {result.order:.2f}, lattice rule {result.lattice_max_error:.1e}")

    setup = build_setup(config)
    rng = np.random.default_rng(config.seed)
    worst = 0.0
    for _ in range(config.blago.samples):
        f, g = random_smooth_signal(setup.lattice, rng), random_smooth_signal(setup.lattice, rng)
        lhs = setup.oracle.apply(f).inner(g)
        rhs = f.inner(time_reverse(setup.oracle.apply(time_reverse(g))))
        worst = max(worst, abs(lhs - rhs) / abs(lhs))
    print(f"adjoint identity: max relative error {worst:.2e}")
    print(f"results in {out}")


if __name__ == "__main__":
    main()
