"""Tracking error of the three trajectory laws on the benchmark sinusoid."""

import numpy as np

from vfcontrol import scenarios as S
from vfcontrol.simulation import control_energy, run_scenario

from _common import band, parser, write_rows

CASES = [("T1", {}), ("T2", {}), ("T3", {"gain": 100.0}), ("T3", {"gain": 400.0})]


def main(argv=None):
    p = parser(__doc__, "out/tracking_comparison.csv")
    p.add_argument("--T", type=float, default=20.0)
    args = p.parse_args(argv)
    rows = []
    for law, kw in CASES:
        res = run_scenario(S.BUILDERS[law](T=args.T, **kw))
        row = {"law": law, **kw, "status": res.status}
        if res.completed:
            norm = np.linalg.norm(res.error, axis=1)
            row["IAE"] = float(np.trapezoid(norm, res.t))
            row["sup_after_10s"] = band(res, 10.0, args.T)
            row["final_error"] = float(norm[-1])
            row["E_tau"] = control_energy(res)
        print(f"{law} {kw or ''}: {res.status} IAE={row.get('IAE', float('nan')):.4g}")
        rows.append(row)
    write_rows(args.out, rows)


if __name__ == "__main__":
    main()
