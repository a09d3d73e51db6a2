"""Error before and after the arm picks up a load on link A.

Regulators take the load at 5 s, tracking laws at 10 s. The table gives the
largest error norm just before the jump and over the last three seconds,
plus the mean late error, which exposes a steady bias.
"""

import numpy as np

from vfcontrol import scenarios as S
from vfcontrol.simulation import run_scenario

from _common import band, parser, write_rows

CASES = [
    ("R2", {}, 5.0, 30.0),
    ("R3", {}, 5.0, 30.0),
    ("T1", {}, 10.0, 30.0),
    ("T2", {}, 10.0, 30.0),
    ("T3", {"gain": 100.0}, 10.0, 30.0),
    ("T3", {"gain": 400.0}, 10.0, 30.0),
]


def main(argv=None):
    p = parser(__doc__, "out/load_robustness.csv")
    p.add_argument("--masses", default=f"{S.TRACKING_LOAD},{S.REGULATION_LOAD}",
                   help="comma-separated load masses in kg")
    args = p.parse_args(argv)
    rows = []
    for mass in (float(m) for m in args.masses.split(",")):
        for law, kw, t_load, T in CASES:
            res = run_scenario(S.with_load(S.BUILDERS[law](T=T, **kw), t_load, mass))
            row = {"law": law, "mass": mass, "t_load": t_load, "status": res.status, **kw}
            if res.completed:
                late = res.window(T - 3, T)
                row["pre_sup"] = band(res, t_load - 1, t_load)
                row["late_sup"] = band(res, T - 3, T)
                row["late_bias"] = float(np.linalg.norm(res.error[late].mean(axis=0)))
                row["late_over_pre"] = row["late_sup"] / row["pre_sup"]
            print(f"{law} {kw or ''} mass={mass:g}: {res.status} "
                  f"late/pre={row.get('late_over_pre', float('nan')):.3g}")
            rows.append(row)
    write_rows(args.out, rows)


if __name__ == "__main__":
    main()
