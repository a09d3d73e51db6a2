"""vfcontrol command line: run, sweep, check, validate.

Exit codes: 0 success, 1 usage or config error, 2 divergence.
Artifacts go to ``--out`` or, by default, ``$VFCONTROL_OUT/<config stem>``
(``./runs`` when the variable is unset).
"""

from __future__ import annotations

import argparse
import io
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import simulation as sim
from .config import ConfigError, ExperimentConfig, load_config
from .dynamics import MODELS, make_model
from .errors import InvalidInputError
from .simulation import atomic_write
from .validation import validate_model

OUT_ENV = "VFCONTROL_OUT"
EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED = 0, 1, 2


def _out_dir(args, cfg: ExperimentConfig) -> Path:
    if args.out:
        return Path(args.out)
    stem = Path(cfg.source).stem if cfg.source else "run"
    return Path(os.environ.get(OUT_ENV, "runs")) / stem


def _err(msg: str) -> None:
    print(f"error: {msg}", file=sys.stderr)


def svg_chart(t, y, title: str, width=640, height=240) -> str:
    """Minimal polyline chart of one error channel."""
    t = np.asarray(t, float)
    y = np.asarray(y, float)
    if len(t) > 2000:
        idx = np.linspace(0, len(t) - 1, 2000).astype(int)
        t, y = t[idx], y[idx]
    lo, hi = float(np.min(y)), float(np.max(y))
    if hi == lo:
        hi = lo + 1.0
    span_t = max(float(t[-1] - t[0]), 1e-12)
    xs = 40 + (t - t[0]) / span_t * (width - 50)
    ys = height - 20 - (y - lo) / (hi - lo) * (height - 40)
    pts = " ".join(f"{a:.1f},{b:.1f}" for a, b in zip(xs, ys))
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">'
            f'<text x="40" y="14" font-size="12">{title} [{lo:.3g}, {hi:.3g}]</text>'
            f'<polyline fill="none" stroke="black" stroke-width="1" points="{pts}"/></svg>\n')


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        _err(str(exc))
        return EXIT_CONFIG
    out = _out_dir(args, cfg)
    try:
        report = cfg.gain_report()
        gaincheck = report.render()
    except InvalidInputError as exc:
        gaincheck = f"gain check unavailable: {exc}"
    result = sim.run_scenario(cfg.scenario)
    sim.write_timeseries(result, str(out / "timeseries.csv"))
    sim.write_summary(result, str(out / "summary.txt"))
    atomic_write(str(out / "gaincheck.txt"), gaincheck + "\n")
    if args.svg:
        for i in range(result.q.shape[1]):
            atomic_write(str(out / f"err{i + 1}.svg"),
                         svg_chart(result.t, result.error[:, i], f"err{i + 1}"))
    if not result.completed:
        print(f"diverged at t = {result.diverged_at:.6g} s; artifacts in {out}")
        return EXIT_DIVERGED
    m = sim.response_metrics(result)
    print(f"completed: E_tau = {m.E_tau:.6g}, final |error| = "
          f"{np.linalg.norm(result.error[-1]):.3e}; artifacts in {out}")
    return EXIT_OK


def _sweep_row(cfg: ExperimentConfig) -> dict:
    result = sim.run_scenario(cfg.scenario)
    m = sim.response_metrics(result)
    return {"E_tau": m.E_tau, "overshoot": float(np.max(m.overshoot)),
            "settling": float(np.max(m.settling_time)),
            "status": result.status if result.completed else f"diverged@{result.diverged_at:g}"}


def render_table(param: str, values, rows) -> str:
    """Two-row layout: parameter values across, then energy and settling."""
    head = [param] + [f"{v:g}" for v in values]
    energy = ["E_tau"] + [f"{r['E_tau']:.4g}" for r in rows]
    settle = ["settling"] + [f"{r['settling']:.3g}" for r in rows]
    status = ["status"] + [r["status"] for r in rows]
    width = max(len(c) for row in (head, energy, settle, status) for c in row) + 2
    return "\n".join("".join(c.rjust(width) for c in row)
                     for row in (head, energy, settle, status)) + "\n"


def cmd_sweep(args) -> int:
    try:
        cfg = load_config(args.config)
        values = [float(v) for v in args.values.split(",") if v.strip()]
        if not values:
            raise ConfigError("empty value list", "--values")
        configs = [cfg.with_gain(args.param, v) for v in values]
    except ValueError as exc:
        _err(str(exc))
        return EXIT_CONFIG
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_sweep_row, configs))
    else:
        rows = [_sweep_row(c) for c in configs]
    out = _out_dir(args, cfg)
    buf = io.StringIO()
    buf.write("value,E_tau,overshoot,settling,status\n")
    for v, r in zip(values, rows):
        buf.write(f"{v!r},{r['E_tau']!r},{r['overshoot']!r},{r['settling']!r},{r['status']}\n")
    atomic_write(str(out / "sweep.csv"), buf.getvalue())
    table = render_table(args.param, values, rows)
    atomic_write(str(out / "sweep.txt"), table)
    print(table, end="")
    return EXIT_OK


def cmd_check(args) -> int:
    try:
        cfg = load_config(args.config)
        report = cfg.gain_report()
    except InvalidInputError as exc:
        _err(str(exc))
        return EXIT_CONFIG
    print(report.render())
    return EXIT_OK


def cmd_validate(args) -> int:
    try:
        model = make_model(args.model)
    except InvalidInputError as exc:
        _err(str(exc))
        return EXIT_CONFIG
    report = validate_model(model, samples=args.samples, seed=args.seed)
    print(report.render())
    return EXIT_OK if report.passed else EXIT_CONFIG


class _Parser(argparse.ArgumentParser):
    # usage errors share the config-error code; 2 is reserved for divergence
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="vfcontrol", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="simulate one scenario file")
    run.add_argument("config")
    run.add_argument("--out", help="output directory")
    run.add_argument("--svg", action="store_true", help="also write one SVG chart per joint error")
    run.set_defaults(func=cmd_run)

    sweep = sub.add_parser("sweep", help="rerun a scenario over values of one scalar gain")
    sweep.add_argument("config")
    sweep.add_argument("--param", required=True)
    sweep.add_argument("--values", required=True, help="comma separated, e.g. 1e2,9e2,9e3")
    sweep.add_argument("--out")
    sweep.add_argument("--jobs", type=int, default=1)
    sweep.set_defaults(func=cmd_sweep)

    check = sub.add_parser("check", help="evaluate the gain conditions of a scenario")
    check.add_argument("config")
    check.set_defaults(func=cmd_check)

    val = sub.add_parser("validate", help="numeric property suites for a model")
    val.add_argument("--model", required=True, help=f"one of {sorted(MODELS)}")
    val.add_argument("--samples", type=int, default=10_000)
    val.add_argument("--seed", type=int, default=0)
    val.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
