"""Focusing sources, delta tests and the non-admissible control."""

from wavefocus.experiments import run_focus

from _common import load, parser


def main():
    args = parser(__doc__, "focus_1d.toml").parse_args()
    config, out = load(args)
    run = run_focus(config, out)
    print(f"lens constant {run.constant:.4f} +- {run.constant_uncertainty:.4f}")
    for rec in run.select():
        if rec["phi_id"] in ("const", "gauss_on"):
            print(
                f"{rec['case']:>10} eps={rec['eps']:.4f} {rec['phi_id']:>8} ratio={rec['ratio']:.3f} "
                f"mass_fraction={rec['mass_fraction']:.2f} l1={rec['l1_norm']:.3g}"
            )
    if config.focus.control_t_hat_diam > 0:
        print(f"control/admissible L1 ratio {run.l1_ratio():.3f}")
    print(f"results in {out}")


if __name__ == "__main__":
    main()
