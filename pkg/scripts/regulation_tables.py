"""Control energy and transient metrics for the set-point regulators.

Sweeps the observer regulator over k_D, alpha_D and alpha_P, and the
filtered regulator over b and alpha_P. One CSV row per run.
"""

from vfcontrol import scenarios as S
from vfcontrol.simulation import run_scenario

from _common import parser, summarize, write_rows

# the observer sweeps reach |v| of a few 1e3 during the transient
OBSERVER = dict(T=5.0, dt=1.25e-5, threshold=1e4)

SWEEPS = [
    ("R1", "k_D_obs", [100.0, 900.0, 9000.0], dict(OBSERVER)),
    ("R1", "alpha_D", [5.0, 10.0, 20.0], dict(OBSERVER, alpha_P=10.0)),
    ("R1", "alpha_P", [5.0, 10.0, 100.0], dict(OBSERVER)),
    ("R2", "b", [5.0, 50.0, 100.0], {}),
    ("R2", "alpha_P", [1.0, 3.0, 20.0], {}),
]


def main(argv=None):
    args = parser(__doc__, "out/regulation_tables.csv").parse_args(argv)
    rows = []
    for law, param, values, base in SWEEPS:
        for value in values:
            kw = {**base, param: value}
            if param == "k_D_obs" and value > 1e3:
                kw["dt"] = 6.25e-6  # RK4 at 12.5 us is not yet converged for this gain
            sc = S.BUILDERS[law](**kw)
            row = {"law": law, "param": param, "value": value}
            row.update(summarize(run_scenario(sc)))
            print(f"{law} {param}={value:g}: {row['status']} E_tau={row['E_tau']:.4g}")
            rows.append(row)
    write_rows(args.out, rows)


if __name__ == "__main__":
    main()
