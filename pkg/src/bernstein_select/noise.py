"""Noise distributions with certified Bernstein parameters (sigma, c).

A spec is certified when, on a grid of lambda values,

    log E exp(lambda * xi) <= lambda^2 sigma^2 / (2 (1 - |lambda| c))

for lambda in (-1/c, 1/c).

Random streams: replication block ``b`` of a run seeded with ``seed`` draws
from ``numpy.random.Generator(PCG64(SeedSequence(seed, spawn_key=(b,))))``.
The stream of a block depends only on ``(seed, b)``, never on scheduling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

KINDS = ("gaussian", "laplace", "centered_poisson", "centered_gamma", "bounded_uniform")
PARAM_NAMES = {
    "gaussian": ("s",),
    "laplace": ("s",),
    "centered_poisson": ("mu",),
    "centered_gamma": ("k", "theta"),
    "bounded_uniform": ("a",),
}


class NoiseParameterError(ValueError):
    pass


class DomainError(ValueError):
    """lambda lies outside the domain where the Laplace transform is finite."""


@dataclass(frozen=True)
class NoiseSpec:
    kind: str
    params: tuple[tuple[str, float], ...]
    sigma: float
    c: float

    def __post_init__(self):
        if self.kind not in KINDS:
            raise NoiseParameterError(f"unknown noise kind {self.kind!r}")
        params = tuple((str(k), float(v)) for k, v in self.params)
        object.__setattr__(self, "params", params)
        names = tuple(k for k, _ in params)
        if names != PARAM_NAMES[self.kind]:
            raise NoiseParameterError(
                f"{self.kind} expects parameters {PARAM_NAMES[self.kind]}, got {names}")
        if any(not (v > 0 and math.isfinite(v)) for _, v in params):
            raise NoiseParameterError(f"{self.kind} parameters must be positive: {dict(params)}")
        if self.sigma < 0 or self.c < 0:
            raise NoiseParameterError("sigma and c must be nonnegative")

    @property
    def p(self) -> dict:
        return dict(self.params)

    @property
    def variance(self) -> float:
        p = self.p
        return {
            "gaussian": lambda: p["s"] ** 2,
            "laplace": lambda: 2 * p["s"] ** 2,
            "centered_poisson": lambda: p["mu"],
            "centered_gamma": lambda: p["k"] * p["theta"] ** 2,
            "bounded_uniform": lambda: p["a"] ** 2 / 3,
        }[self.kind]()

    def with_constants(self, sigma: float, c: float) -> "NoiseSpec":
        return NoiseSpec(self.kind, self.params, float(sigma), float(c))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": self.p, "sigma": self.sigma, "c": self.c}

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseSpec":
        base = make(d["kind"], **d.get("params", {}))
        sigma = d.get("sigma", base.sigma)
        c = d.get("c", base.c)
        return base.with_constants(sigma if sigma is not None else base.sigma,
                                   c if c is not None else base.c)


def gaussian(s: float = 1.0) -> NoiseSpec:
    return NoiseSpec("gaussian", (("s", s),), s, 0.0)


def laplace(s: float = 1.0) -> NoiseSpec:
    return NoiseSpec("laplace", (("s", s),), 2.0 * s, s)


def centered_poisson(mu: float = 1.0) -> NoiseSpec:
    return NoiseSpec("centered_poisson", (("mu", mu),), math.sqrt(mu), 1.0 / 3.0)


def centered_gamma(k: float = 1.0, theta: float = 1.0) -> NoiseSpec:
    return NoiseSpec("centered_gamma", (("k", k), ("theta", theta)), theta * math.sqrt(2 * k), theta)


def bounded_uniform(a: float = 1.0) -> NoiseSpec:
    return NoiseSpec("bounded_uniform", (("a", a),), a, 0.0)


_FACTORIES = {
    "gaussian": gaussian,
    "laplace": laplace,
    "centered_poisson": centered_poisson,
    "centered_gamma": centered_gamma,
    "bounded_uniform": bounded_uniform,
}


def make(kind: str, **params) -> NoiseSpec:
    """Preset spec of ``kind`` with its shipped (sigma, c)."""
    if kind not in _FACTORIES:
        raise NoiseParameterError(f"unknown noise kind {kind!r}")
    try:
        return _FACTORIES[kind](**params)
    except TypeError as exc:
        raise NoiseParameterError(f"bad parameters for {kind}: {exc}") from None


def presets() -> list[NoiseSpec]:
    return [gaussian(1.0), laplace(1.0), centered_poisson(1.0),
            centered_gamma(2.0, 1.0), bounded_uniform(1.0)]


# ---------------------------------------------------------------------------
# sampling

def block_rng(seed: int, block: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed) & (2 ** 64 - 1), spawn_key=(int(block),))
    return np.random.Generator(np.random.PCG64(ss))


def draw(spec: NoiseSpec, size, rng: np.random.Generator) -> np.ndarray:
    p = spec.p
    if spec.kind == "gaussian":
        return rng.normal(0.0, p["s"], size)
    if spec.kind == "laplace":
        return rng.laplace(0.0, p["s"], size)
    if spec.kind == "centered_poisson":
        return rng.poisson(p["mu"], size) - p["mu"]
    if spec.kind == "centered_gamma":
        return rng.gamma(p["k"], p["theta"], size) - p["k"] * p["theta"]
    return rng.uniform(-p["a"], p["a"], size)


def sample(spec: NoiseSpec, n: int, seed: int) -> np.ndarray:
    """n i.i.d. draws, a deterministic function of (spec, n, seed)."""
    if n < 1:
        raise ValueError("n must be at least 1")
    return draw(spec, n, block_rng(seed, 0))


# ---------------------------------------------------------------------------
# Laplace transform

def log_laplace(spec: NoiseSpec, lam):
    """Closed-form log E exp(lam * xi); raises DomainError outside the domain."""
    lam = np.asarray(lam, dtype=float)
    p = spec.p
    if spec.kind == "gaussian":
        out = 0.5 * lam ** 2 * p["s"] ** 2
    elif spec.kind == "laplace":
        t = lam * p["s"]
        if np.any(np.abs(t) >= 1):
            raise DomainError(f"laplace({p['s']}) transform needs |lambda| < {1 / p['s']}")
        out = -np.log1p(-t * t)
    elif spec.kind == "centered_poisson":
        out = p["mu"] * (np.expm1(lam) - lam)
    elif spec.kind == "centered_gamma":
        t = lam * p["theta"]
        if np.any(t >= 1):
            raise DomainError(f"gamma transform needs lambda < {1 / p['theta']}")
        out = p["k"] * (-np.log1p(-t) - t)
    else:
        # log(sinh(x)/x), x = |lam| a; asymptotic form past x = 20
        x = np.abs(lam * p["a"])
        xs = np.clip(x, 1e-300, 20.0)
        xb = np.maximum(x, 20.0)
        out = np.where(x > 20.0, xb + np.log1p(-np.exp(-2 * xb)) - np.log(2 * xb),
                       np.log(np.sinh(xs) / xs))
    return float(out) if out.ndim == 0 else out


def domain(spec: NoiseSpec) -> tuple[float, float]:
    """Open interval of lambda on which the transform is finite."""
    p = spec.p
    if spec.kind == "laplace":
        return -1 / p["s"], 1 / p["s"]
    if spec.kind == "centered_gamma":
        return -math.inf, 1 / p["theta"]
    return -math.inf, math.inf


def bernstein_bound(lam, sigma: float, c: float):
    lam = np.asarray(lam, dtype=float)
    return lam ** 2 * sigma ** 2 / (2 * (1 - np.abs(lam) * c))


def certify(spec: NoiseSpec, grid_size: int = 1000, rtol: float = 1e-12) -> dict:
    """Grid check of the Bernstein condition for ``spec``.

    The grid has ``grid_size`` points spread over 99.9% of (-1/c, 1/c), or
    over |lambda| <= 10/sigma when c = 0, intersected with the transform
    domain.  A point passes when the log-Laplace transform does not exceed
    the bound by more than ``rtol`` relative (round-off in the equality
    case of Gaussian noise).
    """
    if grid_size < 100:
        raise ValueError("grid_size must be at least 100")
    sigma, c = spec.sigma, spec.c
    if c > 0:
        half = 0.999 / c
    else:
        half = 10.0 / sigma if sigma > 0 else 10.0
    lo, hi = domain(spec)
    lo_g = max(-half, lo * 0.999 if math.isfinite(lo) else -half)
    hi_g = min(half, hi * 0.999 if math.isfinite(hi) else half)
    grid = np.linspace(lo_g, hi_g, grid_size)
    lhs = log_laplace(spec, grid)
    rhs = bernstein_bound(grid, sigma, c)
    excess = lhs - rhs
    tol = rtol * np.maximum(1.0, np.abs(rhs))
    worst = int(np.argmax(excess))
    neg, pos = grid < 0, grid > 0
    return {
        "noise": spec.to_dict(),
        "grid_size": int(grid_size),
        "lambda_range": [float(grid[0]), float(grid[-1])],
        "max_violation": float(max(excess[worst], 0.0)),
        "worst_lambda": float(grid[worst]),
        "min_margin": float(-excess.max()),
        "pass_negative": bool(np.all(excess[neg] <= tol[neg])),
        "pass_positive": bool(np.all(excess[pos] <= tol[pos])),
        "pass": bool(np.all(excess <= tol)),
    }
