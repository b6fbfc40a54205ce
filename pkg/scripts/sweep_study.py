"""Resumable sweep over one schedule axis, one CSV per point."""

from wavefocus.experiments import run_sweep

from _common import load, parser


def main():
    p = parser(__doc__, "cutoff_1d.toml")
    p.add_argument("--axis", choices=("alpha", "eps"))
    p.add_argument("--threads", type=int, default=1)
    args = p.parse_args()
    config, out = load(args)
    print(f"wrote {run_sweep(config, out, args.axis, threads=args.threads)}")


if __name__ == "__main__":
    main()
