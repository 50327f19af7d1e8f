"""Deviation bounds, constants, and chaining quantities.

Two different constants both called ``b`` appear in this area and are kept
apart everywhere: ``chain_b`` bounds c*delta(t, t0) over the index set of a
process, ``exp_b`` is the exponent in z = exp_b * log n used by the
family-specific remainders.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

KAPPA = 18.0


@dataclass
class BoundReport:
    name: str
    inputs: dict
    value: float | None = None
    values: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)
    passed: bool | None = None

    def to_dict(self) -> dict:
        out = {"name": self.name, "inputs": self.inputs, "value": self.value}
        if self.values:
            out["values"] = self.values
        if self.passed is not None:
            out["pass"] = self.passed
        out["notes"] = list(self.notes)
        return out


def _nonneg(**kw):
    for k, v in kw.items():
        if v < 0 or math.isnan(v):
            raise ValueError(f"{k} must be nonnegative, got {v}")


# ---------------------------------------------------------------------------
# scalar bounds

def bernstein_quantile(v2: float, c: float, u: float) -> float:
    """sqrt(2 v^2 u) + c u, exceeded with probability at most exp(-u)."""
    _nonneg(v2=v2, c=c, u=u)
    return math.sqrt(2.0 * v2 * u) + c * u


def bernstein_tail(v2: float, c: float, x: float) -> float:
    """exp(-x^2 / (2 (v^2 + c x)))."""
    _nonneg(v2=v2, c=c, x=x)
    if x == 0:
        return 1.0
    if v2 + c * x <= 0:
        raise ValueError("v2 + c*x must be positive")
    return math.exp(-x * x / (2.0 * (v2 + c * x)))


def sup_bound_norm(v: float, chain_b: float, D: int, x: float) -> float:
    """kappa (sqrt(v^2 (D + x)) + chain_b (D + x)).

    Level exceeded by the supremum of a process over a D-dimensional normed
    index set with probability at most exp(-x).
    """
    _nonneg(v=v, chain_b=chain_b, x=x)
    if D < 1:
        raise ValueError("D must be at least 1")
    return KAPPA * (math.sqrt(v * v * (D + x)) + chain_b * (D + x))


def chi_threshold(sigma: float, c: float, u: float, D: int, x: float) -> float:
    """kappa^2 (sigma^2 + 2 c u / kappa) (D + x) for |Pi_S xi|_2^2 on {|Pi_S xi|_inf <= u}."""
    _nonneg(sigma=sigma, c=c, u=u, x=x)
    if D < 1:
        raise ValueError("D must be at least 1")
    return KAPPA ** 2 * (sigma ** 2 + 2.0 * c * u / KAPPA) * (D + x)


def sup_norm_tail(lambda2: float, sigma: float, c: float, x: float, n: int) -> float:
    """2n exp(-x^2 / (2 Lambda_2^2 (sigma^2 + c x))); may exceed 1."""
    _nonneg(sigma=sigma, c=c, x=x)
    if lambda2 <= 0:
        raise ValueError("lambda2 must be positive")
    if x == 0:
        return 2.0 * n
    denom = 2.0 * lambda2 ** 2 * (sigma ** 2 + c * x)
    if denom == 0:
        return 0.0
    return 2.0 * n * math.exp(-x * x / denom)


def truncated_moment_bound(a: float, alpha: float, beta: float, x0: float, p: int) -> tuple[float, float]:
    """Bound on E[X^p 1{X >= x0}] when P(X >= x) <= a exp(-phi(x)).

    phi(x) = x^2 / (2 (alpha + beta x)).  Returns ``(bound, phi(x0))``;
    requires phi(x0) >= 1.
    """
    if a <= 0 or alpha <= 0 or beta < 0 or x0 <= 0:
        raise ValueError("need a, alpha, x0 > 0 and beta >= 0")
    if p < 1:
        raise ValueError("p must be at least 1")
    phi = x0 * x0 / (2.0 * (alpha + beta * x0))
    if phi < 1:
        raise ValueError(f"phi(x0) = {phi:.6g} < 1")
    value = a * x0 ** p * math.exp(-phi) * (1.0 + math.e * math.factorial(p) / phi)
    return value, phi


def constant_ck(K: float) -> float:
    """C(K) = K (K^2 + K - 1) / (K - 1)^3."""
    if not K > 1:
        raise ValueError("K must exceed 1")
    return K * (K * K + K - 1.0) / (K - 1.0) ** 3


def remainder_r(family: str, sigma: float, c: float, Sigma: float, *,
                u: float | None = None, lambda_bar_inf: float | None = None,
                z: float | None = None, a: float | None = None,
                exp_b: float | None = None, d: int | None = None,
                dbar: int | None = None, n: int | None = None) -> float:
    """Remainder term R of the oracle inequality.

    ``family="general"`` is the general form
    kappa^2 (sigma^2 + 2 c u / kappa) Sigma + 2 u^2 e^{-z} / Lambda_bar_inf^2
    (``z=inf`` drops the second term).  ``"histogram"``,
    ``"piecewise_poly"`` and ``"trigonometric"`` give the closed forms in
    terms of (a, exp_b, n) and, respectively, nothing, d, dbar.
    """
    _nonneg(sigma=sigma, c=c, Sigma=Sigma)
    if family == "general":
        if u is None or lambda_bar_inf is None or z is None:
            raise ValueError("general remainder needs u, lambda_bar_inf and z")
        tail = 0.0 if math.isinf(z) else 2.0 * u * u * math.exp(-z) / lambda_bar_inf ** 2
        return KAPPA ** 2 * (sigma ** 2 + 2.0 * c * u / KAPPA) * Sigma + tail
    if a is None or exp_b is None or n is None:
        raise ValueError(f"{family} remainder needs a, exp_b and n")
    s = c + sigma
    factor = family_penalty_factor(family, sigma, c, a=a, exp_b=exp_b, d=d)
    if family == "histogram":
        tail = 2.0 * s * s * (exp_b + 2) ** 2 / (a * a * n ** exp_b)
    elif family == "piecewise_poly":
        tail = 4.0 * s * s * (exp_b + 2) ** 2 / (a * a * n ** exp_b)
    elif family == "trigonometric":
        if dbar is None:
            raise ValueError("trigonometric remainder needs dbar")
        tail = 4.0 * (exp_b + 2) ** 2 * s * s / (a * a * (2 * dbar + 1) * n ** exp_b)
    else:
        raise ValueError(f"unknown family {family!r}")
    return KAPPA ** 2 * factor * Sigma + tail


def family_penalty_factor(family: str, sigma: float, c: float, *, a: float,
                          exp_b: float, d: int | None = None) -> float:
    """The (sigma^2 + ...) factor of the family-specific penalties."""
    s = sigma + c
    if family == "histogram":
        return sigma ** 2 + 2.0 * c * s * (exp_b + 2) / (a * KAPPA)
    if family == "piecewise_poly":
        if d is None:
            raise ValueError("piecewise_poly factor needs d")
        return sigma ** 2 + c * 4.0 * math.sqrt(2.0) * s * (d + 1) * (exp_b + 2) / (a * KAPPA)
    if family == "trigonometric":
        # as displayed for the trigonometric family: no 1/kappa in the second term
        return sigma ** 2 + 4.0 * c * s * (exp_b + 2) / a
    raise ValueError(f"unknown family {family!r}")


def corollary_remainder(K: float, sigma: float, Sigma: float) -> float:
    """K^3 (K-1)^-2 kappa^2 sigma^2 Sigma, the c = 0 remainder."""
    if not K > 1:
        raise ValueError("K must exceed 1")
    return K ** 3 / (K - 1) ** 2 * KAPPA ** 2 * sigma ** 2 * Sigma


# reference thresholds from the Gaussian and bounded comparisons

def gaussian_concentration_threshold(D: int, u: float) -> float:
    """sqrt(D) + sqrt(2u): standard Gaussian chi tail via concentration."""
    return math.sqrt(D) + math.sqrt(2.0 * u)


def bounded_threshold_b1(D: int, x: float, a: float, lambda2: float) -> float:
    return KAPPA * (math.sqrt(D) + math.sqrt(x) + a * lambda2 * x + a * lambda2 * D)


def bounded_threshold_b2(D: int, x: float, a: float) -> float:
    return KAPPA * (a * math.sqrt(D) + a * math.sqrt(x))


def concentration_threshold(EZ: float, v2: float, c: float, u: float, C: float = 1.0) -> float:
    """C (E Z + sqrt(v^2 u) + c u), the Talagrand-type form (C unspecified)."""
    return C * (EZ + math.sqrt(v2 * u) + c * u)


# ---------------------------------------------------------------------------
# chaining

def _series(log_n: Callable[[int], float], v: float, b: float, kmin: int = 12) -> float:
    """sum_k 2^-k (v sqrt(2 L_k) + b L_k),  L_k = log(2^(k+1) N_k).

    Stops once a term is below 1e-14 of the partial sum and the terms decay
    at least geometrically with ratio 3/4, which bounds the dropped tail by
    3 * 1e-14 relative.
    """
    terms = []
    prev = None
    k = 0
    while True:
        L = (k + 1) * math.log(2.0) + log_n(k)
        t = 2.0 ** -k * (v * math.sqrt(2.0 * L) + b * L)
        terms.append(t)
        total = math.fsum(terms)
        if total == 0.0 and k >= kmin:
            return 0.0
        if k >= kmin and prev is not None and t <= 0.75 * prev and t < 1e-14 * total:
            return total
        prev = t
        k += 1
        if k > 10_000:
            raise RuntimeError("chaining series failed to converge")


def proof_recipe_h(D: int, v: float, b: float) -> float:
    """Chaining sum with N_k = 9^(2D) 5^(2kD)."""
    if D < 1:
        raise ValueError("D must be at least 1")
    _nonneg(v=v, b=b)
    l9, l5 = math.log(9.0), math.log(5.0)
    return _series(lambda k: 2 * D * l9 + 2 * k * D * l5, v, b)


def h_constant_check(D: int, v: float, b: float, xs: Sequence[float] = (0.0, 0.5, 1.0, 2.0, 5.0, 10.0, 100.0)) -> BoundReport:
    """Compare the proof-recipe chaining sum to 14 sqrt(D v^2) + 18 D b.

    Also checks, for each x in ``xs``, the regrouping
    14 sqrt(D v^2) + 2 sqrt(2 v^2 x) + 18 b (D + x) <= 18 (sqrt(v^2 (D+x)) + b (D+x)).
    """
    if v == 0 and b == 0:
        raise ValueError("v and b cannot both be zero")
    series = proof_recipe_h(D, v, b)
    majorant = 14.0 * math.sqrt(D * v * v) + 18.0 * D * b
    regroup = []
    for x in xs:
        lhs = 14.0 * math.sqrt(D * v * v) + 2.0 * math.sqrt(2.0 * v * v * x) + 18.0 * b * (D + x)
        rhs = sup_bound_norm(v, b, D, x)
        regroup.append({"x": float(x), "lhs": lhs, "rhs": rhs, "ok": lhs <= rhs * (1 + 1e-15)})
    ok = series < majorant and all(r["ok"] for r in regroup)
    return BoundReport(
        "hConstantCheck", {"D": D, "v": v, "b": b}, value=series,
        values={"series": series, "majorant": majorant, "v_part": proof_recipe_h(D, v, 0.0),
                "b_part": proof_recipe_h(D, 0.0, b), "regrouping": regroup},
        passed=ok)


@dataclass(frozen=True, eq=False)
class PartitionTree:
    """Nested partitions A_0 = {T}, A_1, ... of a finite index set.

    ``levels[k]`` is an integer cell label per point.  Past the last stored
    level the partition is taken constant, which is only admissible when
    every final cell has zero diameter in both distances.

    ``dist_d`` and ``dist_cdelta`` are the (|T|, |T|) matrices of d and
    c*delta; ``v`` and ``chain_b`` are the radii scaling the certificates
    diam_d(A) <= 2^-k v and diam_cdelta(A) <= 2^-k chain_b for A in A_k, k >= 1.
    """

    levels: tuple
    dist_d: np.ndarray = field(repr=False)
    dist_cdelta: np.ndarray = field(repr=False)
    v: float
    chain_b: float

    def __post_init__(self):
        levels = tuple(np.asarray(lv, dtype=int) for lv in self.levels)
        object.__setattr__(self, "levels", levels)
        problems = self.problems()
        if problems:
            raise ValueError("invalid partition tree: " + "; ".join(problems[:5]))

    @property
    def size(self) -> int:
        return self.dist_d.shape[0]

    def cell_counts(self) -> list[int]:
        return [len(np.unique(lv)) for lv in self.levels]

    def cells(self, k: int) -> list[np.ndarray]:
        lv = self.levels[min(k, len(self.levels) - 1)]
        return [np.flatnonzero(lv == c) for c in np.unique(lv)]

    def problems(self) -> list[str]:
        out = []
        T = self.dist_d.shape[0]
        if not self.levels or len(np.unique(self.levels[0])) != 1:
            out.append("level 0 must be the single cell T")
        for k, lv in enumerate(self.levels):
            if lv.shape != (T,):
                out.append(f"level {k} labels {lv.shape} do not match |T| = {T}")
                return out
        for k in range(1, len(self.levels)):
            parent = {}
            for child, par in zip(self.levels[k], self.levels[k - 1]):
                if parent.setdefault(child, par) != par:
                    out.append(f"level {k} cell {child} is not inside a level {k - 1} cell")
                    break
        tol = 1e-12
        last = len(self.levels) - 1
        for k in range(1, len(self.levels)):
            for idx in self.cells(k):
                dd = self.dist_d[np.ix_(idx, idx)].max()
                dc = self.dist_cdelta[np.ix_(idx, idx)].max()
                if dd > 2.0 ** -k * self.v * (1 + tol) + tol:
                    out.append(f"level {k}: d-diameter {dd:.4g} > 2^-{k} v")
                if dc > 2.0 ** -k * self.chain_b * (1 + tol) + tol:
                    out.append(f"level {k}: c*delta-diameter {dc:.4g} > 2^-{k} b")
                if k == last and (dd > tol or dc > tol):
                    out.append(f"final level {k} has a cell of positive diameter")
        return out

    def n_k(self, k: int) -> int:
        counts = self.cell_counts()
        a = counts[min(k, len(counts) - 1)]
        b = counts[min(k + 1, len(counts) - 1)]
        return a * b


def chaining_h(tree: PartitionTree) -> float:
    """H = sum_k 2^-k (v sqrt(2 log(2^(k+1) N_k)) + b log(2^(k+1) N_k))."""
    counts = tree.cell_counts()
    last = len(counts) - 1

    def log_n(k):
        return math.log(counts[min(k, last)]) + math.log(counts[min(k + 1, last)])

    return _series(log_n, tree.v, tree.chain_b)


def chaining_threshold(H: float, v: float, chain_b: float, x: float) -> float:
    """H + 2 sqrt(2 v^2 x) + 2 b x, exceeded with probability <= exp(-x) (x > 0)."""
    _nonneg(v=v, chain_b=chain_b, x=x)
    return H + 2.0 * math.sqrt(2.0 * v * v * x) + 2.0 * chain_b * x


# ---------------------------------------------------------------------------
# covering

_NORMS = {
    "l2": lambda diff: np.sqrt(np.sum(diff * diff, axis=-1)),
    "linf": lambda diff: np.max(np.abs(diff), axis=-1),
    "l1": lambda diff: np.sum(np.abs(diff), axis=-1),
}


def distance_matrix(points, norm: str | Callable = "l2") -> np.ndarray:
    P = np.asarray(points, dtype=float)
    if P.ndim == 1:
        P = P[:, None]
    if callable(norm):
        return np.array([[norm(p, q) for q in P] for p in P])
    if norm not in _NORMS:
        raise ValueError(f"unknown norm {norm!r}")
    fn = _NORMS[norm]
    return np.vstack([fn(P[i] - P) for i in range(P.shape[0])])


def _greedy_centers(dist: np.ndarray, idx: np.ndarray, radius: float) -> tuple[list[int], np.ndarray]:
    """Insertion-order maximal separated subset of ``idx`` and the assignment
    of every point of ``idx`` to the first center within ``radius``."""
    centers: list[int] = []
    for i in idx:
        if all(dist[i, j] > radius for j in centers):
            centers.append(int(i))
    C = np.array(centers)
    within = dist[np.ix_(idx, C)] <= radius
    assign = np.argmax(within, axis=1)
    return centers, assign


def covering_greedy(points, delta: float, norm: str | Callable = "l2") -> np.ndarray:
    """Indices of a greedy maximal delta-separated subset of ``points``.

    Points are scanned in input order and kept when farther than ``delta``
    from every kept point, so the result is delta-separated and every input
    point lies within ``delta`` of it.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    P = np.asarray(points, dtype=float)
    if P.ndim == 1:
        P = P[:, None]
    if P.shape[0] == 0:
        raise ValueError("no points")
    fn = _NORMS[norm] if isinstance(norm, str) else None
    net: list[int] = []
    for i in range(P.shape[0]):
        if not net:
            net.append(i)
            continue
        if fn is not None:
            d = fn(P[net] - P[i])
        else:
            d = np.array([norm(P[j], P[i]) for j in net])
        if np.all(d > delta):
            net.append(i)
    return np.array(net, dtype=int)


def net_is_separated(points, net, delta: float, norm="l2") -> bool:
    D = distance_matrix(np.asarray(points, dtype=float)[net], norm)
    np.fill_diagonal(D, np.inf)
    return bool(np.all(D > delta))


def net_is_covering(points, net, delta: float, norm="l2") -> bool:
    P = np.asarray(points, dtype=float)
    if P.ndim == 1:
        P = P[:, None]
    fn = _NORMS[norm]
    return all(np.min(fn(P[net] - p)) <= delta for p in P)


def covering_bound(delta: float, D: int) -> float:
    """(1 + 2/delta)^D."""
    return (1.0 + 2.0 / delta) ** D


def build_proof_tree(points, v: float, chain_b: float, d_metric="l2", delta_metric="linf",
                     c: float = 1.0, max_levels: int = 30) -> PartitionTree:
    """Partition tree from successive greedy covers.

    Each cell of level k-1 is covered by balls of radius 2^-(k+1) v around
    a greedy separated subset of its points, and split by assigning every
    point to the first ball containing it.  The same is done for c*delta
    with radius 2^-(k+1) chain_b (skipped when c = 0), and level k is the
    partition generated by the two.  Construction stops once all cells have
    zero diameter; if ``max_levels`` is hit first, a final level of
    zero-diameter classes is appended.
    """
    P = np.asarray(points, dtype=float)
    if P.ndim == 1:
        P = P[:, None]
    Dd = distance_matrix(P, d_metric)
    Dc = c * distance_matrix(P, delta_metric) if c > 0 else np.zeros_like(Dd)
    T = P.shape[0]
    zero_classes = _zero_classes(Dd, Dc)

    def refine(labels, dist, radius):
        out = np.empty(T, dtype=int)
        nxt = 0
        for cell in np.unique(labels):
            idx = np.flatnonzero(labels == cell)
            centers, assign = _greedy_centers(dist, idx, radius)
            out[idx] = assign + nxt
            nxt += len(centers)
        return out

    lab2 = np.zeros(T, dtype=int)
    labc = np.zeros(T, dtype=int)
    levels = [np.zeros(T, dtype=int)]
    for k in range(1, max_levels + 1):
        r = 2.0 ** -(k + 1)
        lab2 = refine(lab2, Dd, r * v)
        labc = refine(labc, Dc, r * chain_b) if c > 0 else labc
        joint = _relabel(lab2 * (labc.max() + 1) + labc)
        levels.append(joint)
        if np.array_equal(_relabel(joint * (zero_classes.max() + 1) + zero_classes), joint) \
                and len(np.unique(joint)) == len(np.unique(zero_classes)):
            break
    else:
        levels.append(_relabel(levels[-1] * (zero_classes.max() + 1) + zero_classes))
    return PartitionTree(tuple(levels), Dd, Dc, float(v), float(chain_b))


def _relabel(labels: np.ndarray) -> np.ndarray:
    _, inv = np.unique(labels, return_inverse=True)
    return inv.astype(int)


def _zero_classes(Dd: np.ndarray, Dc: np.ndarray) -> np.ndarray:
    T = Dd.shape[0]
    lab = -np.ones(T, dtype=int)
    nxt = 0
    for i in range(T):
        if lab[i] < 0:
            same = (Dd[i] <= 1e-15) & (Dc[i] <= 1e-15) & (lab < 0)
            lab[same] = nxt
            nxt += 1
    return lab
