"""Experiment configs: flat TOML with dotted section keys (params.m, geometry.nodes, ...)."""
from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError
from .evolution import SolverControls
from .grid import MIN_NODES, Ball, Interval, Parameters, Regime, build_domain, classify_regime

EXPERIMENTS = ("simulate", "profile", "eigen", "selfsim", "rate", "quasilinear", "positivity")
SHAPES = ("bump", "indicator", "eigenmode", "separate_variables", "sine_series", "power", "csv")

# experiment -> regime it needs (None: any regime the solver accepts)
_REGIME_RULE = {
    "rate": Regime.DEGENERATE,
    "positivity": Regime.DEGENERATE,
    "profile": Regime.DEGENERATE,
    "selfsim": Regime.DEGENERATE,
    "quasilinear": Regime.QUASILINEAR,
}
_NEEDS_TIME = ("simulate", "rate", "quasilinear", "positivity")


@dataclass
class InitialData:
    shape: str = "bump"
    amplitude: float = 1.0
    center: float = 0.5
    width: float = 0.25
    lo: float = 0.25
    hi: float = 0.75
    s: float = 1.0
    coefficients: list = field(default_factory=lambda: [1.0])
    power: float = 2.0
    tilt: float = 0.0
    path: str | None = None
    column: str = "u"


@dataclass
class RunOptions:
    t_end: float = 1.0
    t_start: float = 0.0
    samples: int = 25
    window: tuple | None = None
    delta: float = 0.1
    method: str = "minimize_J"
    tolerance: float = 1e-8
    alpha: float | None = None
    beta: float | None = None
    M: float = 1.0
    r_max: float = 10.0
    gap_threshold: float = 0.05


@dataclass
class AssertOptions:
    slope: float = -1.0
    slope_tol: float = 0.15
    eigen_rel_tol: float = 0.01
    ref_max: float = 0.05


@dataclass
class ExperimentConfig:
    experiment: str
    params: Parameters
    geometry: Interval | Ball
    nodes: int
    solver: SolverControls
    initial: InitialData
    run: RunOptions
    checks: AssertOptions
    out_dir: Path
    source: Path | None = None

    def domain(self):
        return build_domain(self.geometry, self.nodes)


def _flatten(tree: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in tree.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def load_raw(path) -> dict:
    path = Path(path)
    try:
        with path.open("rb") as fh:
            return _flatten(tomllib.load(fh))
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc


def loads_raw(text: str) -> dict:
    try:
        return _flatten(tomllib.loads(text))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config: {exc}") from exc


def _num(raw, key, errors, default=None, positive=False, integer=False):
    if key not in raw:
        return default
    val = raw[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        errors.append(f"{key}: must be a number")
        return default
    if integer and int(val) != val:
        errors.append(f"{key}: must be an integer")
    if positive and not val > 0:
        errors.append(f"{key}: must be positive")
    if not math.isfinite(val) and key != "solver.dt_max":
        errors.append(f"{key}: must be finite")
    return val


def validate(raw: dict) -> list[str]:
    """All rule violations of a flat config; empty iff the config is runnable."""
    errors: list[str] = []
    exp = raw.get("experiment")
    if exp is None:
        errors.append("experiment: missing key")
    elif exp not in EXPERIMENTS:
        errors.append(f"experiment: unknown kind {exp!r}, expected one of {', '.join(EXPERIMENTS)}")

    p = _num(raw, "params.p", errors)
    m = _num(raw, "params.m", errors, default=1.0 if exp == "eigen" else None)
    if p is None:
        errors.append("params.p: missing key")
    if m is None:
        errors.append("params.m: missing key")
    regime = None
    if m is not None and p is not None:
        if m <= 0:
            errors.append("params.m: must be positive")
        if p <= 1:
            errors.append("params.p: must exceed 1")
        if m > 0 and p > 1:
            regime = classify_regime(m, p)

    if not any(k.startswith("geometry.") for k in raw):
        errors.append("geometry: missing section")
    else:
        kind = raw.get("geometry.kind", "interval")
        if kind not in ("interval", "ball"):
            errors.append(f"geometry.kind: unknown kind {kind!r}")
        _num(raw, "geometry.length", errors, positive=True)
        _num(raw, "geometry.radius", errors, positive=True)
        dim = _num(raw, "geometry.dim", errors, integer=True, positive=True)
        if kind == "interval" and dim not in (None, 1):
            errors.append("geometry.dim: an interval is one-dimensional")
        nodes = _num(raw, "geometry.nodes", errors, integer=True)
        if nodes is None:
            errors.append("geometry.nodes: missing key")
        elif nodes < MIN_NODES:
            errors.append(f"geometry.nodes: resolution below minimum ({nodes} < {MIN_NODES})")

    if exp in _REGIME_RULE and regime is not None and regime != _REGIME_RULE[exp]:
        errors.append(f"experiment: {exp} requires {_REGIME_RULE[exp].value} regime, got {regime.value}")
    if exp in ("simulate",) and regime == Regime.FAST:
        errors.append("experiment: simulate requires degenerate or quasilinear regime")

    for key in ("solver.dt", "solver.tol", "solver.dt_max", "solver.dt_rel"):
        _num(raw, key, errors, positive=True)
    g = _num(raw, "solver.growth", errors)
    if g is not None and g < 1:
        errors.append("solver.growth: must be >= 1")
    eps = _num(raw, "solver.epsilon", errors)
    if eps is not None and (eps < 0 or (eps == 0 and p is not None and p < 2)):
        errors.append("solver.epsilon: must be positive for p < 2 and nonnegative otherwise")

    if exp in _NEEDS_TIME:
        t_end = _num(raw, "run.t_end", errors, positive=True)
        t0 = _num(raw, "run.t_start", errors, default=0.0)
        if t_end is None:
            errors.append("run.t_end: missing key")
        elif t0 is not None and t_end <= t0:
            errors.append("run.t_end: must exceed run.t_start")
        if t0 is not None and t0 < 0:
            errors.append("run.t_start: must be nonnegative")
        _num(raw, "run.samples", errors, integer=True, positive=True)
        shape = raw.get("initial.shape")
        if shape is None:
            errors.append("initial.shape: missing key")
        elif shape not in SHAPES:
            errors.append(f"initial.shape: unknown shape {shape!r}")
        elif shape == "csv" and "initial.path" not in raw:
            errors.append("initial.path: required for csv initial data")
        elif shape == "separate_variables" and regime not in (None, Regime.DEGENERATE):
            errors.append("initial.shape: separate_variables requires degenerate regime")
    if exp == "rate" and "run.window" in raw:
        w = raw["run.window"]
        if not (isinstance(w, list) and len(w) == 2 and all(isinstance(x, (int, float)) for x in w) and 0 < w[0] < w[1]):
            errors.append("run.window: must be [t_lo, t_hi] with 0 < t_lo < t_hi")
    if exp == "profile" and raw.get("run.method", "minimize_J") not in ("minimize_J", "long_time_limit"):
        errors.append("run.method: must be minimize_J or long_time_limit")
    return errors


def _pick(raw, prefix, cls):
    names = cls.__dataclass_fields__
    kw = {}
    for k, v in raw.items():
        if k.startswith(prefix):
            name = k[len(prefix):]
            if name in names:
                kw[name] = tuple(v) if name == "window" else v
    return cls(**kw)


def build_config(raw: dict, source: Path | None = None) -> ExperimentConfig:
    problems = validate(raw)
    if problems:
        raise ConfigError("; ".join(problems))
    kind = raw.get("geometry.kind", "interval")
    if kind == "interval":
        geom = Interval(float(raw.get("geometry.length", 1.0)))
        N = 1
    else:
        N = int(raw.get("geometry.dim", 1))
        geom = Ball(float(raw.get("geometry.radius", 1.0)), N)
    params = Parameters(float(raw.get("params.m", 1.0)), float(raw["params.p"]), N)
    solver = _pick(raw, "solver.", SolverControls)
    out = Path(raw.get("output.dir", "out"))
    if source is not None and not out.is_absolute():
        out = source.parent / out
    return ExperimentConfig(
        experiment=raw["experiment"], params=params, geometry=geom, nodes=int(raw["geometry.nodes"]),
        solver=solver, initial=_pick(raw, "initial.", InitialData), run=_pick(raw, "run.", RunOptions),
        checks=_pick(raw, "assert.", AssertOptions), out_dir=out, source=source,
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    return build_config(load_raw(path), source=path)
