"""YAML scenario files.

Layout (every section except ``controller`` is optional)::

    model:
      id: phantom3              # phantom3 | planar2 | pointmass1
      params: {m_a: 0.0202}     # keys are the parameter dataclass field names
    controller:
      id: R2                    # R1 R2 R3 T1 T2 T3
      alpha_P: 10               # scalar gains expand to multiples of I
      alpha_D: 10
      alpha_L: 100              # observer L (R1/T1) or filter pole l
      b: 5
      K_P: [[...]]              # optional full-matrix / vector overrides
      init: {z: [0, 0, 0]}      # controller internal state at t = 0
    reference:
      id: benchmark_setpoint    # benchmark_setpoint | benchmark_sinusoid | setpoint | sinusoid
      q_d: [0.1, 0.2, 0.3]      # for setpoint
      offset / amplitude / frequency / phase: [...]   # for sinusoid
      k_q: 1.4                  # optional bound overrides for the gain check
      k_delta: 2.5
    sim: {T: 30, dt: 1.0e-3, q0: [...], v0: [...], divergence_threshold: 1.0e3, record_every: 1}
    disturbances:
      - {t: 5, param: m_a, delta: 1.0}
    check: {beta: 0.5, samples: 4096, seed: 0}
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from . import controllers as ctl
from . import references as refs
from .dynamics import MODELS, ModelConstants, RobotModel, make_model, model_constants
from .errors import InvalidInputError
from .simulation import Disturbance, Scenario

SCALAR_GAINS = ("alpha_P", "alpha_D", "alpha_I", "alpha_L", "b", "k_D_obs", "alpha_LP", "alpha_LD")
MATRIX_GAINS = ("K_P", "K_D", "K_I", "L_obs", "L_P", "L_D")
VECTOR_GAINS = ("b_vec", "l_vec")
SECTIONS = ("model", "controller", "reference", "sim", "disturbances", "check")


class ConfigError(InvalidInputError):
    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        where = ""
        if line is not None:
            where = f"line {line}: "
        if key:
            where += f"{key}: "
        super().__init__(where + message)
        self.key = key
        self.line = line


def _line_index(node, path=(), out=None) -> dict[tuple, int]:
    """Map each key path in the composed YAML tree to its 1-based line."""
    if out is None:
        out = {}
    out.setdefault(path, node.start_mark.line + 1)
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            sub = path + (k.value,)
            out[sub] = k.start_mark.line + 1
            _line_index(v, sub, out)
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            _line_index(v, path + (i,), out)
    return out


class _Reader:
    """Typed access to the parsed tree that reports the key path and line on failure."""

    def __init__(self, data, lines):
        self.data = data
        self.lines = lines

    def fail(self, path: tuple, message: str):
        key = ".".join(str(p) for p in path)
        probe = path
        while probe not in self.lines and probe:
            probe = probe[:-1]
        raise ConfigError(message, key, self.lines.get(probe))

    def get(self, path: tuple, default=None):
        node = self.data
        for p in path:
            if isinstance(node, dict) and p in node:
                node = node[p]
            elif isinstance(node, list) and isinstance(p, int) and p < len(node):
                node = node[p]
            else:
                return default
        return node

    def section(self, name: str, required=False) -> dict:
        value = self.get((name,))
        if value is None:
            if required:
                self.fail((name,), "section is required")
            return {}
        if not isinstance(value, dict):
            self.fail((name,), "expected a mapping")
        return value

    def number(self, path: tuple, default=None, positive=False, nonnegative=False):
        raw = self.get(path)
        if raw is None:
            return default
        try:
            value = float(raw)  # accepts "1e-3", which YAML 1.1 leaves as a string
        except (TypeError, ValueError):
            self.fail(path, f"expected a number, got {raw!r}")
        if not np.isfinite(value):
            self.fail(path, "must be finite")
        if positive and not value > 0:
            self.fail(path, f"must be positive, got {value:g}")
        if nonnegative and value < 0:
            self.fail(path, f"must be nonnegative, got {value:g}")
        return value

    def array(self, path: tuple, ndim: int, size: int | None = None):
        raw = self.get(path)
        if raw is None:
            return None
        try:
            arr = np.array(raw, dtype=float)
        except (TypeError, ValueError):
            self.fail(path, "expected numbers")
        if arr.ndim != ndim or (size is not None and arr.shape != (size,) * ndim):
            shape = "x".join([str(size)] * ndim) if size else f"{ndim}-d"
            self.fail(path, f"expected shape {shape}, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            self.fail(path, "entries must be finite")
        return arr

    def unknown(self, path: tuple, mapping: dict, allowed):
        extra = sorted(set(mapping) - set(allowed))
        if extra:
            self.fail(path + (extra[0],), f"unknown key; expected one of {sorted(allowed)}")


@dataclass(frozen=True)
class CheckSettings:
    beta: float = 0.5
    samples: int = 4096
    seed: int = 0
    k_q: float | None = None
    k_delta: float | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    """A parsed scenario file; ``scenario`` is ready to run."""

    scenario: Scenario
    scalars: dict = field(default_factory=dict)
    overrides: dict = field(default_factory=dict)
    check: CheckSettings = CheckSettings()
    source: str | None = None

    @property
    def model(self) -> RobotModel:
        return self.scenario.model

    @property
    def controller(self) -> str:
        return self.scenario.controller

    def constants(self) -> ModelConstants:
        return model_constants(self.model, samples=self.check.samples, seed=self.check.seed)

    def bounds(self) -> tuple[float | None, float | None]:
        """Reference constants (k_q, k_delta) for the tracking checks."""
        k_q, k_delta = self.check.k_q, self.check.k_delta
        if k_q is None or k_delta is None:
            rb = refs.ref_bounds(self.scenario.reference)
            k_q = rb.k_q_envelope if k_q is None else k_q
            k_delta = rb.k_delta_envelope if k_delta is None else k_delta
        return k_q, k_delta

    def gain_report(self) -> ctl.GainCheckReport:
        k_q, k_delta = self.bounds()
        return ctl.check_gains(self.controller, self.scenario.gains, self.constants(),
                               k_q=k_q, k_delta=k_delta, beta=self.check.beta)

    def with_gain(self, name: str, value: float) -> "ExperimentConfig":
        """Copy with one scalar gain replaced (matrix overrides still win)."""
        if name not in SCALAR_GAINS:
            raise ConfigError(f"not a scalar gain; expected one of {list(SCALAR_GAINS)}", name)
        scalars = dict(self.scalars, **{name: float(value)})
        gains = _build_gains(self.controller, self.model.n, scalars, self.overrides)
        return replace(self, scalars=scalars, scenario=replace(self.scenario, gains=gains))


def _build_gains(controller, n, scalars, overrides) -> ctl.Gains:
    gains = ctl.Gains.from_scalars(controller, n, **scalars)
    changes = {k: v for k, v in overrides.items() if k in MATRIX_GAINS}
    if "b_vec" in overrides:
        changes["b"] = overrides["b_vec"]
    if "l_vec" in overrides:
        changes["l"] = overrides["l_vec"]
    return replace(gains, **changes).validated(controller, n)


def _model(r: _Reader) -> RobotModel:
    sec = r.section("model")
    r.unknown(("model",), sec, ("id", "params"))
    model_id = str(sec.get("id", "phantom3"))
    params = sec.get("params") or {}
    if not isinstance(params, dict):
        r.fail(("model", "params"), "expected a mapping")
    if model_id not in MODELS:
        r.fail(("model", "id"), f"unknown model {model_id!r}; expected one of {sorted(MODELS)}")
    values = {k: r.number(("model", "params", k)) for k in params}
    try:
        return make_model(model_id, values)
    except (InvalidInputError, TypeError) as exc:
        r.fail(("model", "params"), str(exc))


def _reference(r: _Reader, n: int) -> refs.SinusoidReference:
    sec = r.section("reference")
    keys = ("id", "q_d", "offset", "amplitude", "frequency", "phase", "k_q", "k_delta")
    r.unknown(("reference",), sec, keys)
    rid = str(sec.get("id", "benchmark_setpoint"))
    if rid in refs.BUILTIN:
        ref = refs.BUILTIN[rid]()
    elif rid == "setpoint":
        q_d = r.array(("reference", "q_d"), 1, n)
        if q_d is None:
            r.fail(("reference", "q_d"), "required for a setpoint reference")
        ref = refs.setpoint(q_d)
    elif rid == "sinusoid":
        parts = {}
        for k in ("offset", "amplitude", "frequency", "phase"):
            arr = r.array(("reference", k), 1, n)
            parts[k] = np.zeros(n) if arr is None else arr
        ref = refs.SinusoidReference(**parts)
    else:
        r.fail(("reference", "id"),
               f"unknown reference {rid!r}; expected one of "
               f"{sorted(refs.BUILTIN) + ['setpoint', 'sinusoid']}")
    if ref.n != n:
        r.fail(("reference", "id"), f"reference has {ref.n} joints, model has {n}")
    return ref


def _controller(r: _Reader, n: int):
    sec = r.section("controller", required=True)
    allowed = ("id", "init") + SCALAR_GAINS + MATRIX_GAINS + VECTOR_GAINS
    r.unknown(("controller",), sec, allowed)
    cid = sec.get("id")
    if cid not in ctl.CONTROLLERS:
        r.fail(("controller", "id"), f"expected one of {list(ctl.CONTROLLERS)}, got {cid!r}")
    scalars = {}
    for k in SCALAR_GAINS:
        v = r.number(("controller", k), positive=True)
        if v is not None:
            scalars[k] = v
    overrides = {}
    for k in MATRIX_GAINS:
        arr = r.array(("controller", k), 2, n)
        if arr is not None:
            overrides[k] = arr
    for k in VECTOR_GAINS:
        arr = r.array(("controller", k), 1, n)
        if arr is not None:
            overrides[k] = arr
    try:
        gains = _build_gains(cid, n, scalars, overrides)
    except InvalidInputError as exc:
        r.fail(("controller",), str(exc))
    init = sec.get("init") or {}
    if not isinstance(init, dict):
        r.fail(("controller", "init"), "expected a mapping")
    r.unknown(("controller", "init"), init, ctl.STATE_LAYOUT[cid])
    init = {k: r.array(("controller", "init", k), 1, n) for k in init}
    return cid, gains, scalars, overrides, init


def parse_config(text: str, source: str | None = None) -> ExperimentConfig:
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        raise ConfigError(f"malformed YAML: {getattr(exc, 'problem', exc)}", line=line) from None
    if not isinstance(data, dict):
        raise ConfigError("top level must be a mapping", line=1)
    r = _Reader(data, _line_index(node))
    r.unknown((), data, SECTIONS)

    model = _model(r)
    n = model.n
    cid, gains, scalars, overrides, init = _controller(r, n)
    ref = _reference(r, n)

    sim = r.section("sim")
    r.unknown(("sim",), sim, ("T", "dt", "q0", "v0", "divergence_threshold", "record_every"))
    dt = r.number(("sim", "dt"), 1e-3, positive=True)
    T = r.number(("sim", "T"), 10.0, positive=True)
    if T < dt:
        r.fail(("sim", "T"), f"must be at least dt = {dt:g}")
    threshold = r.number(("sim", "divergence_threshold"), 1e3, positive=True)
    record_every = r.number(("sim", "record_every"), 1, positive=True)
    if record_every != int(record_every):
        r.fail(("sim", "record_every"), "must be an integer")

    dist_raw = r.get(("disturbances",)) or []
    if not isinstance(dist_raw, list):
        r.fail(("disturbances",), "expected a list")
    disturbances = []
    for i, item in enumerate(dist_raw):
        path = ("disturbances", i)
        if not isinstance(item, dict):
            r.fail(path, "expected a mapping with t, param, delta")
        r.unknown(path, item, ("t", "param", "delta"))
        t = r.number(path + ("t",), nonnegative=True)
        delta = r.number(path + ("delta",))
        param = item.get("param")
        if t is None or delta is None or param is None:
            r.fail(path, "needs t, param and delta")
        if t > T:
            r.fail(path + ("t",), f"outside [0, T = {T:g}]")
        if param not in model.param_names():
            r.fail(path + ("param",), f"{model.name} has no parameter {param!r}")
        disturbances.append(Disturbance(t, str(param), delta))

    chk = r.section("check")
    r.unknown(("check",), chk, ("beta", "samples", "seed"))
    ref_sec = r.section("reference")
    check = CheckSettings(
        beta=r.number(("check", "beta"), 0.5, positive=True),
        samples=int(r.number(("check", "samples"), 4096, positive=True)),
        seed=int(r.number(("check", "seed"), 0, nonnegative=True)),
        k_q=r.number(("reference", "k_q"), nonnegative=True) if "k_q" in ref_sec else None,
        k_delta=(r.number(("reference", "k_delta"), nonnegative=True)
                 if "k_delta" in ref_sec else None),
    )

    scenario = Scenario(
        model=model, controller=cid, gains=gains, reference=ref, T=T, dt=dt,
        q0=r.array(("sim", "q0"), 1, n), v0=r.array(("sim", "v0"), 1, n),
        controller_init=init, disturbances=tuple(disturbances),
        divergence_threshold=threshold, record_every=int(record_every),
    )
    try:
        scenario.validated()
    except InvalidInputError as exc:
        raise ConfigError(str(exc)) from None
    return ExperimentConfig(scenario, scalars, overrides, check, source)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text, str(path))
