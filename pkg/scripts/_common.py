"""Small helpers shared by the experiment scripts."""

import argparse
import csv
from pathlib import Path

import numpy as np

from vfcontrol.simulation import control_energy, response_metrics


def parser(description: str, default_out: str) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--out", default=default_out, help="CSV file to write")
    return p


def write_rows(path: str, rows: list[dict]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fields = list(dict.fromkeys(k for row in rows for k in row))
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        w.writerows(rows)
    print(f"wrote {len(rows)} rows to {path}")


def summarize(result) -> dict:
    row = {"status": result.status, "diverged_at": result.diverged_at}
    row["E_tau"] = control_energy(result) if len(result.t) > 1 else float("nan")
    m = response_metrics(result)
    if m.available:
        row["overshoot_max"] = float(m.overshoot.max())
        row["settling_max"] = float(m.settling_time.max())
    row["final_error"] = float(np.linalg.norm(result.error[-1]))
    return row


def band(result, t0: float, t1: float) -> float:
    """Largest error norm over [t0, t1]."""
    return float(np.linalg.norm(result.error[result.window(t0, t1)], axis=1).max())
