"""Penalized least-squares model selection."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import bounds
from .bounds import KAPPA
from .linalg import project
from .models import ModelCollection, collection_lambdas

TIE_TOL = 1e-9


@dataclass
class PenaltyConfig:
    """Penalty pen(m) = multiplier * K * kappa^2 * factor * (D_m + Delta_m).

    In ``mode="general"`` the factor is sigma^2 + 2 c u / kappa with u from
    :func:`compute_u`; in ``mode="family"`` it is the closed-form
    factor of the collection's family.
    """

    K: float
    z: float
    u: float
    sigma: float
    c: float
    factor: float
    per_model: dict
    mode: str = "general"
    multiplier: float = 1.0
    lambda2_sn: float | None = None
    lambda_bar_inf: float | None = None
    exp_b: float | None = None
    a: float | None = None

    def __getitem__(self, label):
        return self.per_model[label]

    def minimal(self, D: int, weight: float) -> float:
        return self.K * KAPPA ** 2 * self.factor * (D + weight)


@dataclass
class SelectionResult:
    chosen: str
    crit_values: dict
    fitted: np.ndarray = field(repr=False)
    ties: list

    def to_dict(self) -> dict:
        return {"chosen": self.chosen, "ties": list(self.ties),
                "crit": dict(self.crit_values), "fitted": self.fitted.tolist()}


def compute_u(sigma: float, c: float, lambda_bar_inf: float, lambda2_sn: float,
              n: int, z: float) -> float:
    """u = (c + sigma) * Lambda_bar_inf * Lambda_2(S_n) * log(n^2 e^z)."""
    if n < 2:
        raise ValueError("n must be at least 2")
    if z < 0:
        raise ValueError("z must be nonnegative")
    if lambda_bar_inf < 1:
        raise ValueError("lambda_bar_inf is floored at 1")
    return (c + sigma) * lambda_bar_inf * lambda2_sn * (2.0 * math.log(n) + z)


def family_u(family: str, sigma: float, c: float, a: float, exp_b: float, d: int | None = None) -> float:
    """u obtained with the family majorants of Lambda_bar_inf * Lambda_2(S_n)."""
    s = sigma + c
    if family == "histogram":
        return s * (exp_b + 2) / a
    if family == "piecewise_poly":
        return 2.0 * math.sqrt(2.0) * (d + 1) * (exp_b + 2) * s / a
    if family == "trigonometric":
        return 2.0 * (exp_b + 2) * s / a
    raise ValueError(f"no closed-form u for family {family!r}")


def penalty(collection: ModelCollection, sigma: float, c: float, K: float,
            z: float | None = None, *, exp_b: float = 1.0, mode: str = "general",
            multiplier: float = 1.0, lambdas: tuple[float, float] | None = None,
            lambda2_sn: float | None = None, a: float | None = None) -> PenaltyConfig:
    """Minimal admissible penalty for every model of ``collection``.

    ``z`` defaults to ``exp_b * log n``.  ``lambdas`` may carry precomputed
    ``(Lambda_2(S_n), Lambda_bar_inf)``; ``lambda2_sn`` overrides the first
    (e.g. with a majorant).  ``mode="family"`` ignores both and uses
    the family's closed form with constants ``a`` and ``exp_b``.
    """
    if not K > 1:
        raise ValueError("K must exceed 1")
    if multiplier < 1:
        raise ValueError("penalty multiplier must be at least 1")
    if sigma < 0 or c < 0:
        raise ValueError("sigma and c must be nonnegative")
    n = collection.n
    if z is None:
        z = exp_b * math.log(n)
    if a is None:
        a = collection.params.get("a", 1.0)
    l2 = lbar = None
    if mode == "general":
        l2, lbar = lambdas if lambdas is not None else collection_lambdas(collection)
        if lambda2_sn is not None:
            l2 = lambda2_sn
        u = compute_u(sigma, c, lbar, l2, n, z)
        factor = sigma ** 2 + 2.0 * c * u / KAPPA
    elif mode == "family":
        fam = collection.family
        d = collection.params.get("d")
        factor = bounds.family_penalty_factor(fam, sigma, c, a=a, exp_b=exp_b, d=d)
        u = family_u(fam, sigma, c, a, exp_b, d)
        z = exp_b * math.log(n)
    else:
        raise ValueError(f"unknown penalty mode {mode!r}")
    per = {m.label: multiplier * K * KAPPA ** 2 * factor * (m.dim + m.weight) for m in collection}
    return PenaltyConfig(K=K, z=z, u=u, sigma=sigma, c=c, factor=factor, per_model=per,
                         mode=mode, multiplier=multiplier, lambda2_sn=l2, lambda_bar_inf=lbar,
                         exp_b=exp_b, a=a)


def criterion(collection: ModelCollection, pen: PenaltyConfig, Y) -> dict:
    """crit(m) = |Y - fhat_m|_2^2 + pen(m) for every model."""
    Y = np.asarray(Y, dtype=float)
    if Y.shape != (collection.n,):
        raise ValueError(f"Y must have length {collection.n}")
    out = {}
    for m in collection:
        r = Y - project(m.space, Y)
        out[m.label] = float(r @ r) + pen[m.label]
    return out


def _winner(values: np.ndarray, dims: np.ndarray, labels: list[str]) -> tuple[int, list[int]]:
    best = values.min()
    tol = TIE_TOL * max(1.0, abs(best))
    tied = np.flatnonzero(values <= best + tol)
    order = sorted(tied, key=lambda i: (dims[i], labels[i]))
    return int(order[0]), [int(i) for i in order]


def select(collection: ModelCollection, pen: PenaltyConfig, Y) -> SelectionResult:
    """Minimize crit; ties (within 1e-9 relative) go to the smaller model,
    then to the smaller label."""
    crit = criterion(collection, pen, Y)
    labels = collection.labels()
    vals = np.array([crit[l] for l in labels])
    dims = np.array([m.dim for m in collection])
    i, tied = _winner(vals, dims, labels)
    chosen = collection.items[i]
    return SelectionResult(chosen.label, crit, project(chosen.space, np.asarray(Y, float)),
                           [labels[j] for j in tied])


def select_batch(collection: ModelCollection, pen: PenaltyConfig, Y: np.ndarray,
                 f: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray | None]:
    """Selection for every row of ``Y``.

    Returns the chosen model index per row and, when ``f`` is given, the
    (rows, models) matrix of losses |f - fhat_m|_2^2.
    """
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    items = collection.items
    crit = np.empty((Y.shape[0], len(items)))
    loss = None if f is None else np.empty_like(crit)
    for j, m in enumerate(items):
        fit = project(m.space, Y)
        r = Y - fit
        crit[:, j] = np.einsum("ij,ij->i", r, r) + pen[m.label]
        if f is not None:
            e = f - fit
            loss[:, j] = np.einsum("ij,ij->i", e, e)
    labels = collection.labels()
    dims = np.array([m.dim for m in items])
    chosen = np.array([_winner(row, dims, labels)[0] for row in crit], dtype=int)
    return chosen, loss


def exact_risks(collection: ModelCollection, f, variance: float) -> dict:
    """E|f - fhat_m|^2 = |f - Pi_m f|^2 + variance * D_m for i.i.d. noise."""
    f = np.asarray(f, dtype=float)
    out = {}
    for m in collection:
        r = f - project(m.space, f)
        out[m.label] = float(r @ r) + variance * m.dim
    return out


def remainder_for(collection: ModelCollection, pen: PenaltyConfig) -> float:
    if pen.mode == "family":
        return bounds.remainder_r(collection.family, pen.sigma, pen.c, collection.sigma,
                                  a=pen.a, exp_b=pen.exp_b, d=collection.params.get("d"),
                                  dbar=collection.params.get("dbar"), n=collection.n)
    return bounds.remainder_r("general", pen.sigma, pen.c, collection.sigma,
                              u=pen.u, lambda_bar_inf=pen.lambda_bar_inf, z=pen.z)


def oracle_rhs(collection: ModelCollection, pen: PenaltyConfig, risk_estimates: dict) -> dict:
    """C(K) [inf_m (risk_m + pen(m)) + R].

    ``risk_estimates`` maps every label to E|f - fhat_m|^2, either exact
    (:func:`exact_risks`) or simulated.
    """
    terms = {l: risk_estimates[l] + pen[l] for l in collection.labels()}
    best_label = min(terms, key=lambda l: (terms[l], l))
    R = remainder_for(collection, pen)
    ck = bounds.constant_ck(pen.K)
    return {"C_K": ck, "inf": terms[best_label], "argmin": best_label, "R": R,
            "rhs": ck * (terms[best_label] + R)}
