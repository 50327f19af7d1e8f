"""Model families: histograms, piecewise polynomials, trigonometric systems.

Partitions are of {1, ..., n} into blocks of consecutive integers, written
1-based and inclusive as in the user-facing I/O.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .linalg import Subspace, contains, lambda2, lambda_inf, orthonormalize, sum_subspace

MAX_FULL_ENUMERATION = 12
MAX_TRIG_GROUND = 12
PAIRWISE_EXACT_LIMIT = 100


class PartitionError(ValueError):
    pass


class TheoryConditionWarning(UserWarning):
    """A size condition of the oracle inequality is violated; bounds stay computable."""


@dataclass(frozen=True)
class IntervalPartition:
    n: int
    blocks: tuple[tuple[int, int], ...]

    def __post_init__(self):
        blocks = tuple((int(lo), int(hi)) for lo, hi in self.blocks)
        object.__setattr__(self, "blocks", blocks)
        problems = _partition_problems(self.n, blocks)
        if problems:
            raise PartitionError("; ".join(problems))

    @classmethod
    def from_sizes(cls, sizes: Sequence[int]) -> "IntervalPartition":
        sizes = [int(s) for s in sizes]
        if any(s < 1 for s in sizes):
            raise PartitionError("block sizes must be positive")
        ends = np.cumsum(sizes)
        starts = np.concatenate([[1], ends[:-1] + 1])
        return cls(int(ends[-1]) if sizes else 0, tuple(zip(starts.tolist(), ends.tolist())))

    @classmethod
    def from_breaks(cls, n: int, breaks: Sequence[int]) -> "IntervalPartition":
        """``breaks`` are the last indices of every block but the final one."""
        cuts = sorted(set(int(b) for b in breaks))
        starts = [1] + [b + 1 for b in cuts]
        ends = cuts + [n]
        return cls(n, tuple(zip(starts, ends)))

    @classmethod
    def regular(cls, n: int, k: int) -> "IntervalPartition":
        """k blocks of (almost) equal size."""
        edges = np.floor(np.linspace(0, n, k + 1)).astype(int)
        return cls.from_sizes(np.diff(edges).tolist())

    @property
    def sizes(self) -> list[int]:
        return [hi - lo + 1 for lo, hi in self.blocks]

    @property
    def min_size(self) -> int:
        return min(self.sizes)

    @property
    def breaks(self) -> tuple[int, ...]:
        return tuple(hi for _, hi in self.blocks[:-1])

    def __len__(self):
        return len(self.blocks)

    @property
    def label(self) -> str:
        return "|".join(f"{lo}-{hi}" for lo, hi in self.blocks)

    def refines(self, other: "IntervalPartition") -> bool:
        return set(other.breaks) <= set(self.breaks)


def _partition_problems(n, blocks) -> list[str]:
    problems = []
    if n < 1:
        return [f"n must be positive, got {n}"]
    if not blocks:
        return ["partition has no blocks"]
    expected = 1
    for lo, hi in blocks:
        if hi < lo:
            problems.append(f"empty block [{lo},{hi}]")
        if lo > expected:
            problems.append(f"gap: indices {expected}..{lo - 1} are not covered")
        elif lo < expected:
            problems.append(f"overlap: block [{lo},{hi}] starts before {expected}")
        expected = max(expected, hi + 1)
    if expected <= n:
        problems.append(f"gap: indices {expected}..{n} are not covered")
    elif expected > n + 1:
        problems.append(f"blocks run past n={n}")
    return problems


def partition_problems(n: int, blocks) -> list[str]:
    """All validity violations of ``blocks`` as a partition of {1..n}."""
    return _partition_problems(n, tuple(tuple(b) for b in blocks))


def partition_join(m1: IntervalPartition, m2: IntervalPartition) -> IntervalPartition:
    """Coarsest common refinement: the nonempty intersections I & I'."""
    if m1.n != m2.n:
        raise PartitionError(f"partitions of different sets (n={m1.n} vs n={m2.n})")
    return IntervalPartition.from_breaks(m1.n, set(m1.breaks) | set(m2.breaks))


# ---------------------------------------------------------------------------
# bases

def histogram_basis(n: int, part: IntervalPartition) -> Subspace:
    if part.n != n:
        raise PartitionError(f"partition covers {{1..{part.n}}}, expected n={n}")
    B = np.zeros((n, len(part)))
    for j, (lo, hi) in enumerate(part.blocks):
        B[lo - 1:hi, j] = 1.0 / math.sqrt(hi - lo + 1)
    return Subspace(B)


def chebyshev_block(size: int, d: int) -> np.ndarray:
    """(size, d+1) discrete Chebyshev system on one block.

    Column 0 is constant 1/sqrt(size); column j >= 1 is
    sqrt(2/size) * cos(j * (i - 1/2) * pi / size), i = 1..size.
    """
    i = np.arange(1, size + 1)
    cols = [np.full(size, 1.0 / math.sqrt(size))]
    for j in range(1, d + 1):
        cols.append(math.sqrt(2.0 / size) * np.cos(j * (i - 0.5) * math.pi / size))
    return np.column_stack(cols)


def _equispaced_block(lo: int, hi: int, n: int, d: int) -> np.ndarray:
    x = np.arange(lo, hi + 1) / n
    x = (x - x.mean()) / max(np.ptp(x), 1e-300)
    V = np.vander(x, d + 1, increasing=True)
    Q, _ = np.linalg.qr(V)
    Q, _ = np.linalg.qr(Q)
    # fix signs so the constant column is positive
    return Q * np.sign(Q[0:1, :] + (Q[0:1, :] == 0))


def piecewise_poly_basis(n: int, part: IntervalPartition, d: int,
                         grid: str = "chebyshev") -> Subspace:
    """Piecewise polynomials of degree <= d on ``part``.

    ``grid="chebyshev"`` uses the discrete Chebyshev system, exactly
    orthonormal and with sup-norm at most sqrt(2/|I|) per vector.
    ``grid="equispaced"`` orthonormalizes the monomials in x_i = i/n, which
    spans polynomials of the design points themselves.
    """
    if part.n != n:
        raise PartitionError(f"partition covers {{1..{part.n}}}, expected n={n}")
    if d < 0:
        raise ValueError("degree must be nonnegative")
    small = [(lo, hi) for lo, hi in part.blocks if hi - lo + 1 < d + 1]
    if small:
        raise PartitionError(f"blocks {small} have fewer than d+1={d + 1} points")
    B = np.zeros((n, (d + 1) * len(part)))
    for k, (lo, hi) in enumerate(part.blocks):
        if grid == "chebyshev":
            block = chebyshev_block(hi - lo + 1, d)
        elif grid == "equispaced":
            block = _equispaced_block(lo, hi, n, d)
        else:
            raise ValueError(f"unknown grid {grid!r}")
        B[lo - 1:hi, k * (d + 1):(k + 1) * (d + 1)] = block
    return Subspace(B)


def trig_vector(n: int, j: int) -> np.ndarray:
    """phi_j evaluated at x_i = i/n."""
    x = np.arange(1, n + 1) / n
    if j == 0:
        return np.full(n, 1.0 / math.sqrt(n))
    freq = (j + 1) // 2
    fn = np.cos if j % 2 == 1 else np.sin
    return math.sqrt(2.0 / n) * fn(2 * math.pi * freq * x)


def trig_basis(n: int, m, dbar: int | None = None) -> Subspace:
    idx = sorted(set(int(j) for j in m))
    top = 2 * dbar if dbar is not None else n - 1
    bad = [j for j in idx if j < 0 or j > top]
    if bad:
        raise ValueError(f"trigonometric indices {bad} outside {{0..{top}}}")
    if idx and 2 * ((idx[-1] + 1) // 2) >= n:
        raise ValueError(f"frequency {(idx[-1] + 1) // 2} too high for n={n}")
    if not idx:
        return Subspace.zero(n)
    return Subspace(np.column_stack([trig_vector(n, j) for j in idx]))


def trig_label(m) -> str:
    return "{" + ",".join(str(j) for j in sorted(m)) + "}"


# ---------------------------------------------------------------------------
# collections

@dataclass(frozen=True, eq=False)
class Model:
    label: str
    space: Subspace = field(repr=False)
    weight: float
    key: object = field(repr=False)

    @property
    def dim(self) -> int:
        return self.space.dim


@dataclass(frozen=True, eq=False)
class ModelCollection:
    """Indexed family of models with weights Delta_m.

    ``family`` is one of ``"histogram"``, ``"piecewise_poly"``,
    ``"trigonometric"`` or ``"generic"``; ``params`` records how it was built.
    """

    items: tuple[Model, ...]
    family: str
    envelope: Subspace = field(repr=False)
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.items:
            raise ValueError("empty model collection")
        labels = [m.label for m in self.items]
        if len(set(labels)) != len(labels):
            raise ValueError("duplicate model labels")
        if any(m.weight < 0 or not math.isfinite(m.weight) for m in self.items):
            raise ValueError("weights must be finite and nonnegative")

    @property
    def n(self) -> int:
        return self.envelope.ambient_dim

    @property
    def sigma(self) -> float:
        """Sum of exp(-Delta_m)."""
        return math.fsum(math.exp(-m.weight) for m in self.items)

    def __len__(self):
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    def labels(self) -> list[str]:
        return [m.label for m in self.items]

    def __getitem__(self, label: str) -> Model:
        for m in self.items:
            if m.label == label:
                return m
        raise KeyError(label)

    def check_envelope(self, tol: float = 1e-9) -> bool:
        return all(contains(self.envelope, m.space, tol) for m in self.items)

    @classmethod
    def from_spaces(cls, spaces: dict, weights: dict | float = 1.0) -> "ModelCollection":
        """Generic collection from ``{label: Subspace}``."""
        items = []
        for label, S in spaces.items():
            w = weights[label] if isinstance(weights, dict) else float(weights)
            items.append(Model(str(label), S, float(w), str(label)))
        env = _sum_all([m.space for m in items])
        return cls(tuple(items), "generic", env, {})


def _sum_all(spaces) -> Subspace:
    n = spaces[0].ambient_dim
    cols = [S.basis for S in spaces if S.dim]
    if not cols:
        return Subspace.zero(n)
    return orthonormalize(np.hstack(cols).T)


def compositions(finest: IntervalPartition) -> list[IntervalPartition]:
    """Partitions obtained by merging consecutive blocks of ``finest``.

    All 2^(k-1) of them when k = |finest| <= 12, otherwise the dyadic
    merges (groups of 1, 2, 4, ... consecutive finest blocks).
    """
    k = len(finest)
    cuts = finest.breaks
    if k <= MAX_FULL_ENUMERATION:
        out = []
        for r in range(k):
            for chosen in itertools.combinations(cuts, r):
                out.append(IntervalPartition.from_breaks(finest.n, chosen))
        return out
    out = []
    group = 1
    while True:
        chosen = [cuts[i] for i in range(group - 1, k - 1, group)]
        out.append(IntervalPartition.from_breaks(finest.n, chosen))
        if group >= k:
            break
        group *= 2
    return out[::-1]


def _resolve_weights(weights, default: Callable[[int, object], float]):
    if weights is None or weights == "default":
        return default
    if callable(weights):
        return weights
    if isinstance(weights, (int, float)):
        return lambda idx, key: float(weights)
    raise ValueError(f"unsupported weight rule {weights!r}")


def _warn(msg: str):
    warnings.warn(msg, TheoryConditionWarning, stacklevel=3)


def build_histogram_collection(n: int, finest: IntervalPartition, weights="default",
                               a: float = 1.0) -> ModelCollection:
    need = a * a * math.log(n) ** 2
    if finest.min_size < need:
        _warn(f"smallest finest block has {finest.min_size} points < a^2 log^2 n = {need:.2f}")
    rule = _resolve_weights(weights, lambda idx, part: float(len(part)))
    items = tuple(
        Model(p.label, histogram_basis(n, p), float(rule(i, p)), p)
        for i, p in enumerate(compositions(finest)))
    return ModelCollection(items, "histogram", histogram_basis(n, finest),
                           {"finest": finest, "a": a})


def build_piecewise_poly_collection(n: int, finest: IntervalPartition, d: int,
                                    weights="default", a: float = 1.0,
                                    grid: str = "chebyshev") -> ModelCollection:
    need = (d + 1) * a * a * math.log(n) ** 2
    if finest.min_size < max(need, d + 1):
        _warn(f"smallest finest block has {finest.min_size} points < (d+1) a^2 log^2 n = {need:.2f}")
    rule = _resolve_weights(weights, lambda idx, part: float(len(part)))
    items = tuple(
        Model(p.label, piecewise_poly_basis(n, p, d, grid), float(rule(i, p)), p)
        for i, p in enumerate(compositions(finest)))
    if grid == "equispaced" or d == 0:
        env = piecewise_poly_basis(n, finest, d, grid)
    else:
        # Chebyshev-node systems of coarse blocks are not contained in those of the finest one
        env = _sum_all([m.space for m in items])
    return ModelCollection(items, "piecewise_poly", env,
                           {"finest": finest, "d": d, "a": a, "grid": grid})


def build_trig_collection(n: int, dbar: int, mode: str = "nested", weights="default",
                          a: float = 1.0) -> ModelCollection:
    """Trigonometric models indexed by subsets of {0..2*dbar}.

    ``mode="nested"`` gives {}, {0}, {0,1}, ..., {0..2*dbar};
    ``mode="subsets"`` gives every subset (requires 2*dbar + 1 <= 12).
    """
    ground = 2 * dbar + 1
    if ground > n:
        raise ValueError(f"2*dbar+1 = {ground} exceeds n = {n}")
    cap = math.sqrt(n) / (a * math.log(n))
    if ground > cap:
        _warn(f"2*dbar+1 = {ground} exceeds sqrt(n)/(a log n) = {cap:.2f}")
    if mode == "nested":
        sets = [frozenset(range(k)) for k in range(ground + 1)]
        default = lambda idx, m: 1.0 + math.log(idx + 1)
    elif mode == "subsets":
        if ground > MAX_TRIG_GROUND:
            raise ValueError(f"all-subsets family limited to a ground set of {MAX_TRIG_GROUND}")
        sets = [frozenset(c) for r in range(ground + 1)
                for c in itertools.combinations(range(ground), r)]
        default = lambda idx, m: len(m) + math.log(math.comb(ground, len(m)))
    else:
        raise ValueError(f"unknown trigonometric mode {mode!r}")
    rule = _resolve_weights(weights, default)
    items = tuple(
        Model(trig_label(m), trig_basis(n, m, dbar), float(rule(i, m)), m)
        for i, m in enumerate(sets))
    return ModelCollection(items, "trigonometric", trig_basis(n, range(ground), dbar),
                           {"dbar": dbar, "mode": mode, "a": a})


# ---------------------------------------------------------------------------
# metric quantities

def control_lambda_bounds(P: IntervalPartition, J: int, Phi: float) -> tuple[float, float]:
    """Upper bounds (Lambda_2^2, Lambda_inf) for a block-supported system.

    Valid for an orthonormal system phi_{j,I}, j in J, I in P, with each
    phi_{j,I} supported on I and |phi_{j,I}|_inf <= Phi / sqrt(|I|).
    """
    if J < 1 or Phi <= 0:
        raise ValueError("need J >= 1 and Phi > 0")
    l2sq = min(J * Phi ** 2 / P.min_size, 1.0)
    linf = min(J * Phi ** 2, math.sqrt(P.n) * math.sqrt(l2sq))
    return l2sq, linf


def _joins_exactly(C: ModelCollection) -> bool:
    if C.family in ("histogram", "trigonometric"):
        return True
    return C.family == "piecewise_poly" and (C.params["d"] == 0 or C.params["grid"] == "equispaced")


def _pair_key(C: ModelCollection, m1: Model, m2: Model, structural: bool):
    if C.family == "trigonometric":
        return frozenset(m1.key) | frozenset(m2.key)
    if structural:
        return partition_join(m1.key, m2.key)
    return tuple(sorted((m1.label, m2.label)))


def _key_space(C: ModelCollection, key, m1: Model, m2: Model) -> Subspace:
    if C.family == "trigonometric":
        return trig_basis(C.n, key, C.params["dbar"])
    if C.family == "histogram":
        return histogram_basis(C.n, key)
    if isinstance(key, IntervalPartition):
        return piecewise_poly_basis(C.n, key, C.params["d"], C.params["grid"])
    return sum_subspace(m1.space, m2.space)


def collection_lambdas(C: ModelCollection) -> tuple[float, float]:
    """(Lambda_2 of the envelope, Lambda_bar_inf floored at 1).

    Pair sums use the structural identities (partition join, index union)
    where they hold.  Otherwise they are orthonormalized explicitly; past
    100 models a piecewise-polynomial family falls back on the partition
    join, which is then only an approximation for Chebyshev systems.
    """
    l2 = lambda2(C.envelope) if C.envelope.dim else 0.0
    structural = _joins_exactly(C) or (
        C.family == "piecewise_poly" and len(C) > PAIRWISE_EXACT_LIMIT)
    items = C.items
    cache: dict = {}
    best = 1.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for i, m1 in enumerate(items):
            for m2 in items[i:]:
                key = _pair_key(C, m1, m2, structural)
                if key not in cache:
                    cache[key] = lambda_inf(_key_space(C, key, m1, m2))
                best = max(best, cache[key])
    return l2, best
