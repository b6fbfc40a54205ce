"""Cutoff sources over an alpha schedule, with errors against the truncated target."""

import dataclasses

from wavefocus.experiments import run_cutoff

from _common import load, parser


def main():
    p = parser(__doc__, "cutoff_1d.toml")
    p.add_argument("--alphas", type=float, nargs="+", help="overrides the alpha schedule")
    p.add_argument("--threads", type=int, default=1)
    args = p.parse_args()
    config, out = load(args)
    if args.alphas:
        config = config.replace(cutoff=dataclasses.replace(config.cutoff, alphas=tuple(args.alphas)))
    rows = run_cutoff(config, out, threads=args.threads)
    print(f"{'alpha':>8} {'iters':>6} {'rel_error':>10} {'velocity':>9} {'neumann0':>9} {'calls':>7}")
    for r in rows:
        print(
            f"{r.alpha:8.0e} {r.iterations:6d} {r.rel_error:10.4f} {r.velocity_centered:9.4f} "
            f"{r.neumann_start:9.2f} {r.oracle_calls:7d}"
        )
    print(f"results in {out}")


if __name__ == "__main__":
    main()
