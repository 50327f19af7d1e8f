"""Run configuration: YAML text <-> validated, immutable RunConfig.

Grammar (every section and key optional unless stated)::

    subcommand: run-chi
    n: 128
    out: results
    family:
      kind: histogram        # histogram | piecewise_poly | trigonometric
      finest: [16, 16, ...]  # block sizes, or [[lo, hi], ...] with 1-based bounds
      degree: 0              # piecewise_poly
      grid: chebyshev        # piecewise_poly: chebyshev | equispaced
      dbar: 2                # trigonometric
      mode: nested           # trigonometric: nested | subsets
      weights: default       # or a constant
      model: null            # space of single-space experiments (partition or index list)
    noise:
      kind: gaussian
      params: {s: 1.0}
      sigma: null            # override of the shipped Bernstein constants
      c: null
    constants: {K: 2.0, z: null, expB: 1.0, a: 1.0, penalty: general, multiplier: 1.0}
    experiment: {xs: [0.5, 1.0, 2.0], u: null, reps: 100000, seed: 20240601}
    signal: {values: [2, -1, 1, -2], sizes: null}
    data: y.csv
    counterexample: {D: 10000, C: 1.0, p: null, us: null}

Unknown keys are errors.  Validation reports every violation at once.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields

import yaml

from . import noise as noise_mod
from .models import partition_problems

DEFAULT_SEED = 20240601
SUBCOMMANDS = ("compute-bounds", "certify-noise", "select", "run-chi", "run-supnorm",
               "run-oracle", "run-counterexample", "covering", "chaining-h")
FAMILIES = ("histogram", "piecewise_poly", "trigonometric")


class ConfigError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {p}" for p in self.problems))


@dataclass(frozen=True)
class FamilyConfig:
    kind: str = "histogram"
    finest: tuple | None = None
    degree: int = 0
    grid: str = "chebyshev"
    dbar: int = 2
    mode: str = "nested"
    weights: str | float = "default"
    model: tuple | None = None


@dataclass(frozen=True)
class NoiseConfig:
    kind: str = "gaussian"
    params: tuple = (("s", 1.0),)
    sigma: float | None = None
    c: float | None = None

    def spec(self) -> noise_mod.NoiseSpec:
        return noise_mod.NoiseSpec.from_dict(
            {"kind": self.kind, "params": dict(self.params), "sigma": self.sigma, "c": self.c})


@dataclass(frozen=True)
class Constants:
    K: float = 2.0
    z: float | None = None
    expB: float = 1.0
    a: float = 1.0
    penalty: str = "general"
    multiplier: float = 1.0


@dataclass(frozen=True)
class ExperimentConfig:
    xs: tuple = (0.5, 1.0, 2.0)
    u: float | None = None
    reps: int = 100_000
    seed: int = DEFAULT_SEED


@dataclass(frozen=True)
class SignalConfig:
    values: tuple = (2.0, -1.0, 1.0, -2.0)
    sizes: tuple | None = None


@dataclass(frozen=True)
class CounterExampleConfig:
    D: int = 10_000
    C: float = 1.0
    p: float | None = None
    us: tuple | None = None


@dataclass(frozen=True)
class RunConfig:
    subcommand: str | None = None
    n: int = 128
    out: str = "."
    family: FamilyConfig = field(default_factory=FamilyConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    constants: Constants = field(default_factory=Constants)
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)
    signal: SignalConfig = field(default_factory=SignalConfig)
    data: str | None = None
    counterexample: CounterExampleConfig = field(default_factory=CounterExampleConfig)

    def finest_blocks(self) -> tuple:
        if self.family.finest is not None:
            return self.family.finest
        k = 8 if self.n >= 8 else 1
        edges = [round(i * self.n / k) for i in range(k + 1)]
        return tuple((edges[i] + 1, edges[i + 1]) for i in range(k))

    def signal_blocks(self) -> tuple:
        if self.signal.sizes is not None:
            return _sizes_to_blocks(self.signal.sizes)
        k = len(self.signal.values)
        edges = [round(i * self.n / k) for i in range(k + 1)]
        return tuple((edges[i] + 1, edges[i + 1]) for i in range(k))


# ---------------------------------------------------------------------------
# parsing

def _sizes_to_blocks(sizes):
    out, lo = [], 1
    for s in sizes:
        out.append((lo, lo + s - 1))
        lo += s
    return tuple(out)


class _Reader:
    def __init__(self):
        self.errors: list[str] = []

    def section(self, raw, name, cls):
        if raw is None:
            return {}
        if not isinstance(raw, dict):
            self.errors.append(f"section '{name}' must be a mapping")
            return {}
        allowed = {f.name for f in fields(cls)}
        for k in raw:
            if k not in allowed:
                self.errors.append(f"unknown key '{k}' in section '{name}'")
        return {k: v for k, v in raw.items() if k in allowed}

    def number(self, d, key, where, default, *, integer=False, nullable=False):
        v = d.get(key, default)
        if v is None:
            if not nullable:
                self.errors.append(f"{where}{key} must be set")
                return default
            return None
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            if isinstance(v, str) and v.strip().lower() in ("inf", "+inf", ".inf") and not integer:
                return math.inf
            self.errors.append(f"{where}{key} must be a number, got {v!r}")
            return default
        if integer:
            if isinstance(v, float) and not v.is_integer():
                self.errors.append(f"{where}{key} must be an integer, got {v!r}")
                return default
            return int(v)
        if math.isnan(v):
            self.errors.append(f"{where}{key} must not be NaN")
            return default
        return float(v)

    def choice(self, d, key, where, default, options):
        v = d.get(key, default)
        if v not in options:
            self.errors.append(f"{where}{key} must be one of {', '.join(options)}, got {v!r}")
            return default
        return v

    def numbers(self, d, key, where, default, *, integer=False, nullable=False):
        v = d.get(key, default)
        if v is None:
            if not nullable:
                self.errors.append(f"{where}{key} must be set")
            return None
        if not isinstance(v, (list, tuple)):
            self.errors.append(f"{where}{key} must be a list")
            return default
        tmp = {key: None}
        out = []
        for x in v:
            tmp[key] = x
            out.append(self.number(tmp, key, where, None, integer=integer, nullable=False))
        if any(x is None for x in out):
            return default
        return tuple(out)

    def require(self, ok, msg):
        if not ok:
            self.errors.append(msg)


def _blocks(r: _Reader, v, where):
    """Block sizes or explicit (lo, hi) pairs -> tuple of pairs (unchecked)."""
    if not isinstance(v, (list, tuple)) or not v:
        r.errors.append(f"{where} must be a nonempty list")
        return None
    if all(isinstance(b, (list, tuple)) for b in v):
        if not all(len(b) == 2 and all(isinstance(x, int) and not isinstance(x, bool) for x in b)
                   for b in v):
            r.errors.append(f"{where} blocks must be [lo, hi] integer pairs")
            return None
        return tuple((int(lo), int(hi)) for lo, hi in v)
    if all(isinstance(s, int) and not isinstance(s, bool) for s in v):
        if any(s < 1 for s in v):
            r.errors.append(f"{where} block sizes must be positive")
            return None
        return _sizes_to_blocks(v)
    r.errors.append(f"{where} must list block sizes or [lo, hi] pairs")
    return None


def _family(r: _Reader, raw, n) -> FamilyConfig:
    d = r.section(raw, "family", FamilyConfig)
    w = "family."
    kind = r.choice(d, "kind", w, "histogram", FAMILIES)
    finest = _blocks(r, d["finest"], "family.finest") if d.get("finest") is not None else None
    degree = r.number(d, "degree", w, 0, integer=True)
    grid = r.choice(d, "grid", w, "chebyshev", ("chebyshev", "equispaced"))
    dbar = r.number(d, "dbar", w, 2, integer=True)
    mode = r.choice(d, "mode", w, "nested", ("nested", "subsets"))
    weights = d.get("weights", "default")
    if weights != "default":
        weights = r.number(d, "weights", w, "default")
        if isinstance(weights, float):
            r.require(weights >= 0, "family.weights must be nonnegative")
    model = None
    if d.get("model") is not None:
        if kind == "trigonometric":
            model = r.numbers(d, "model", w, None, integer=True)
            if model is not None:
                ground = 2 * dbar + 1
                r.require(all(0 <= j < ground for j in model) and len(set(model)) == len(model),
                          f"family.model indices must be distinct and lie in 0..{ground - 1}")
                model = tuple(sorted(model))
        else:
            model = _blocks(r, d["model"], "family.model")
    r.require(degree >= 0, "family.degree must be nonnegative")
    r.require(dbar >= 0, "family.dbar must be nonnegative")
    if kind == "trigonometric":
        r.require(2 * dbar + 1 <= n, f"2*dbar+1 = {2 * dbar + 1} exceeds n = {n}")
    else:
        for name, blocks in (("finest", finest), ("model", model)):
            if blocks is not None:
                for p in partition_problems(n, blocks):
                    r.errors.append(f"family.{name}: {p}")
        if kind == "piecewise_poly" and finest is not None:
            small = [f"{lo}-{hi}" for lo, hi in finest if hi - lo + 1 < degree + 1]
            r.require(not small, f"family.finest blocks {small} have fewer than degree+1 points")
    return FamilyConfig(kind, finest, degree, grid, dbar, mode, weights, model)


def _noise(r: _Reader, raw) -> NoiseConfig:
    d = r.section(raw, "noise", NoiseConfig)
    kind = r.choice(d, "kind", "noise.", "gaussian", noise_mod.KINDS)
    params = d.get("params")
    expected = noise_mod.PARAM_NAMES[kind]
    if params is None:
        params = noise_mod.make(kind).p
    if not isinstance(params, dict):
        r.errors.append("noise.params must be a mapping")
        params = noise_mod.make(kind).p
    for k in params:
        if k not in expected:
            r.errors.append(f"unknown key '{k}' in section 'noise.params' (expected {', '.join(expected)})")
    vals = []
    for k in expected:
        if k not in params:
            r.errors.append(f"noise.params.{k} must be set")
            continue
        v = r.number(params, k, "noise.params.", 1.0)
        r.require(v > 0 and math.isfinite(v), f"noise.params.{k} must be positive")
        vals.append((k, v))
    sigma = r.number(d, "sigma", "noise.", None, nullable=True)
    c = r.number(d, "c", "noise.", None, nullable=True)
    for name, v in (("sigma", sigma), ("c", c)):
        r.require(v is None or (v >= 0 and math.isfinite(v)), f"noise.{name} must be nonnegative")
    return NoiseConfig(kind, tuple(vals), sigma, c)


def _constants(r: _Reader, raw) -> Constants:
    d = r.section(raw, "constants", Constants)
    w = "constants."
    K = r.number(d, "K", w, 2.0)
    z = r.number(d, "z", w, None, nullable=True)
    expB = r.number(d, "expB", w, 1.0)
    a = r.number(d, "a", w, 1.0)
    pen = r.choice(d, "penalty", w, "general", ("general", "family"))
    mult = r.number(d, "multiplier", w, 1.0)
    r.require(K > 1, "K must exceed 1")
    r.require(z is None or z >= 0, "constants.z must be nonnegative")
    r.require(expB > 0, "constants.expB must be positive")
    r.require(a > 0, "constants.a must be positive")
    r.require(mult >= 1, "constants.multiplier must be at least 1")
    return Constants(K, z, expB, a, pen, mult)


def _experiment(r: _Reader, raw) -> ExperimentConfig:
    d = r.section(raw, "experiment", ExperimentConfig)
    w = "experiment."
    xs = r.numbers(d, "xs", w, (0.5, 1.0, 2.0))
    u = r.number(d, "u", w, None, nullable=True)
    reps = r.number(d, "reps", w, 100_000, integer=True)
    seed = r.number(d, "seed", w, DEFAULT_SEED, integer=True)
    r.require(xs is not None and len(xs) > 0, "experiment.xs must be a nonempty list")
    r.require(xs is None or all(x >= 0 and math.isfinite(x) for x in xs),
              "experiment.xs must be finite and nonnegative")
    r.require(u is None or u > 0, "experiment.u must be positive")
    r.require(reps >= 1, "experiment.reps must be positive")
    r.require(seed >= 0, "experiment.seed must be nonnegative")
    return ExperimentConfig(xs, u, reps, seed)


def _signal(r: _Reader, raw, n) -> SignalConfig:
    d = r.section(raw, "signal", SignalConfig)
    values = r.numbers(d, "values", "signal.", (2.0, -1.0, 1.0, -2.0))
    sizes = r.numbers(d, "sizes", "signal.", None, integer=True, nullable=True)
    if values is not None and not values:
        r.errors.append("signal.values must be nonempty")
    if sizes is not None:
        r.require(values is None or len(sizes) == len(values),
                  "signal.sizes and signal.values must have the same length")
        r.require(all(s >= 1 for s in sizes), "signal.sizes must be positive")
        r.require(sum(sizes) == n, f"signal.sizes sum to {sum(sizes)}, expected n = {n}")
    elif values:
        r.require(len(values) <= n, "more signal values than points")
    return SignalConfig(values, sizes)


def _counter(r: _Reader, raw) -> CounterExampleConfig:
    d = r.section(raw, "counterexample", CounterExampleConfig)
    w = "counterexample."
    D = r.number(d, "D", w, 10_000, integer=True)
    C = r.number(d, "C", w, 1.0)
    p = r.number(d, "p", w, None, nullable=True)
    us = r.numbers(d, "us", w, None, nullable=True)
    r.require(D >= 1, "counterexample.D must be positive")
    r.require(C >= 1, "counterexample.C must be at least 1")
    r.require(p is None or 0 < p <= 1, "counterexample.p must lie in (0, 1]")
    r.require(us is None or all(u > 0 for u in us), "counterexample.us must be positive")
    return CounterExampleConfig(D, C, p, us)


def parse_config(text: str | None, subcommand: str | None = None) -> RunConfig:
    """Parse and validate YAML text; raises ConfigError listing every problem."""
    try:
        raw = yaml.safe_load(text) if text else {}
    except yaml.YAMLError as exc:
        raise ConfigError([f"malformed YAML: {exc}"]) from None
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(["top level must be a mapping"])
    r = _Reader()
    top = r.section(raw, "<top>", RunConfig)
    sub = subcommand or top.get("subcommand")
    if sub is not None and sub not in SUBCOMMANDS:
        r.errors.append(f"unknown subcommand {sub!r}")
    n = r.number(top, "n", "", 128, integer=True)
    r.require(n >= 2, "n must be at least 2")
    n = max(n, 2)
    out = top.get("out", ".")
    r.require(isinstance(out, str) and out != "", "out must be a nonempty path")
    data = top.get("data")
    r.require(data is None or isinstance(data, str), "data must be a path")
    if sub == "select":
        r.require(data is not None, "select needs a data file (key 'data')")
    cfg = RunConfig(
        subcommand=sub, n=n, out=out if isinstance(out, str) else ".",
        family=_family(r, top.get("family"), n),
        noise=_noise(r, top.get("noise")),
        constants=_constants(r, top.get("constants")),
        experiment=_experiment(r, top.get("experiment")),
        signal=_signal(r, top.get("signal"), n),
        data=data,
        counterexample=_counter(r, top.get("counterexample")),
    )
    if r.errors:
        raise ConfigError(r.errors)
    try:
        cfg.noise.spec()
    except ValueError as exc:
        raise ConfigError([f"noise: {exc}"]) from None
    return cfg


# ---------------------------------------------------------------------------
# serialization

def _plain(v):
    if isinstance(v, tuple):
        return [_plain(x) for x in v]
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    return v


def to_dict(cfg: RunConfig) -> dict:
    d = asdict(cfg)
    d["noise"]["params"] = dict(cfg.noise.params)
    return _plain(d)


def serialize_config(cfg: RunConfig) -> str:
    """YAML text with parse_config(serialize_config(cfg)) == cfg."""
    return yaml.safe_dump(to_dict(cfg), sort_keys=False, default_flow_style=None)
