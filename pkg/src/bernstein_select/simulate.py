"""Monte Carlo validation of the tail bounds and the oracle inequality.

Replications are processed in fixed blocks of ``BLOCK`` draws; block ``b``
uses the random stream ``noise.block_rng(seed, b)``.  Blocks may run on any
number of threads, and their results are reduced in block order, so every
report depends on (configuration, seed) only.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import special, stats

from . import bounds, noise as noise_mod
from .bounds import KAPPA
from .linalg import Subspace, lambda2, lambda_inf
from .models import ModelCollection
from .noise import NoiseSpec
from .selection import PenaltyConfig, compute_u, exact_risks, oracle_rhs, penalty, select_batch

BLOCK = 4096
CONFIDENCE = 0.95
MIN_TAIL_REPS = 10_000
MIN_ORACLE_REPS = 1_000


@dataclass
class TailEstimate:
    threshold: float
    reps: int
    exceed: int
    point: float
    ci_lo: float
    ci_hi: float
    bound: float

    def __post_init__(self):
        if not 0 <= self.exceed <= self.reps:
            raise ValueError("exceed count out of range")


def clopper_pearson(k: int, n: int, confidence: float = CONFIDENCE) -> tuple[float, float]:
    ci = stats.binomtest(int(k), int(n)).proportion_ci(confidence_level=confidence, method="exact")
    return float(ci.low), float(ci.high)


def tail_estimate(exceed: int, reps: int, threshold: float, bound: float = math.nan) -> TailEstimate:
    lo, hi = clopper_pearson(exceed, reps)
    return TailEstimate(float(threshold), int(reps), int(exceed), exceed / reps, lo, hi, float(bound))


def run_blocks(fn: Callable[[np.random.Generator, int, int], object], reps: int, seed: int,
               threads: int = 1) -> list:
    """Apply ``fn(rng, count, block)`` to every block, results in block order."""
    if reps < 1:
        raise ValueError("reps must be at least 1")
    nblocks = -(-reps // BLOCK)
    jobs = [(b, min(BLOCK, reps - b * BLOCK)) for b in range(nblocks)]

    def task(job):
        b, count = job
        return fn(noise_mod.block_rng(seed, b), count, b)

    if threads <= 1:
        return [task(j) for j in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(task, jobs))


def estimate_tail(sampler: Callable[[np.random.Generator, int], np.ndarray], threshold: float,
                  reps: int, seed: int, threads: int = 1) -> TailEstimate:
    """Frequency of ``sampler`` values >= ``threshold`` with a Clopper-Pearson interval."""
    counts = run_blocks(lambda rng, k, b: int(np.count_nonzero(sampler(rng, k) >= threshold)),
                        reps, seed, threads)
    return tail_estimate(sum(counts), reps, threshold)


def _row(x, est: TailEstimate, verdict: str, **extra) -> dict:
    row = {"x": float(x), "threshold": est.threshold, "exceed": est.exceed, "reps": est.reps,
           "ci_lo": est.ci_lo, "ci_hi": est.ci_hi, "bound": est.bound, "verdict": verdict}
    row.update(extra)
    return row


def _dominated(est: TailEstimate) -> bool:
    return est.exceed == 0 or est.ci_hi <= est.bound


def _need_reps(reps, least):
    if reps < least:
        raise ValueError(f"at least {least} replications required, got {reps}")


def _projection_stats(S: Subspace, spec: NoiseSpec, rng, count):
    xi = noise_mod.draw(spec, (count, S.ambient_dim), rng)
    if S.dim == 0:
        return np.zeros(count), np.zeros(count)
    coef = xi @ S.basis
    chi2 = np.einsum("ij,ij->i", coef, coef)
    sup = np.max(np.abs(coef @ S.basis.T), axis=1)
    return chi2, sup


def _space_echo(S: Subspace) -> dict:
    with np.errstate(all="ignore"):
        return {"n": S.ambient_dim, "D": S.dim, "lambda2": lambda2(S) if S.dim else 0.0}


def default_u(S: Subspace, spec: NoiseSpec, z: float | None = None) -> float:
    """u computed for the one-model collection {S}: Lambda_bar_inf = max(Lambda_inf(S), 1)."""
    n = S.ambient_dim
    z = math.log(n) if z is None else z
    return compute_u(spec.sigma, spec.c, max(lambda_inf(S), 1.0), lambda2(S), n, z)


def chi_tail_experiment(S: Subspace, spec: NoiseSpec, xs: Sequence[float], u: float,
                        reps: int = 100_000, seed: int = 0, threads: int = 1) -> dict:
    """Frequency of {|Pi_S xi|^2 >= chi_threshold(x), |Pi_S xi|_inf <= u} against e^-x."""
    if S.dim < 1:
        raise ValueError("chi tail experiment needs D >= 1")
    _need_reps(reps, MIN_TAIL_REPS)
    thr = [bounds.chi_threshold(spec.sigma, spec.c, u, S.dim, x) for x in xs]

    def block(rng, count, b):
        chi2, sup = _projection_stats(S, spec, rng, count)
        ok = sup <= u
        return [int(np.count_nonzero((chi2 >= t) & ok)) for t in thr]

    counts = np.sum(run_blocks(block, reps, seed, threads), axis=0)
    rows = []
    for x, t, k in zip(xs, thr, counts):
        est = tail_estimate(int(k), reps, t, math.exp(-x))
        rows.append(_row(x, est, "pass" if _dominated(est) else "fail"))
    return _report("chi_tail", S, spec, reps, seed, rows, u=u)


def sup_norm_tail_experiment(S: Subspace, spec: NoiseSpec, xs: Sequence[float],
                             reps: int = 100_000, seed: int = 0, threads: int = 1) -> dict:
    """Frequency of {|Pi_S xi|_inf >= x} against 2n exp(-x^2 / (2 L2^2 (sigma^2 + c x)))."""
    _need_reps(reps, MIN_TAIL_REPS)
    l2 = lambda2(S)
    n = S.ambient_dim

    def block(rng, count, b):
        _, sup = _projection_stats(S, spec, rng, count)
        return [int(np.count_nonzero(sup >= x)) for x in xs]

    counts = np.sum(run_blocks(block, reps, seed, threads), axis=0)
    rows = []
    for x, k in zip(xs, counts):
        bound = bounds.sup_norm_tail(l2, spec.sigma, spec.c, x, n)
        est = tail_estimate(int(k), reps, x, bound)
        rows.append(_row(x, est, "pass" if _dominated(est) else "fail", vacuous=bound >= 1.0))
    return _report("sup_norm_tail", S, spec, reps, seed, rows)


def sup_bound_experiment(S: Subspace, spec: NoiseSpec, xs: Sequence[float], u: float,
                         reps: int = 100_000, seed: int = 0, threads: int = 1) -> dict:
    """|Pi_S xi|_2 as the supremum of <xi, t> over the unit ball of S.

    For each x the level z = kappa sqrt((sigma^2 + 2cu/kappa)(D + x)) fixes
    the chaining radii v = sigma, b = c u / z of the restricted index set,
    and the tested threshold is the generic bound at those radii (which
    never exceeds z).
    """
    if S.dim < 1:
        raise ValueError("sup bound experiment needs D >= 1")
    _need_reps(reps, MIN_TAIL_REPS)
    D = S.dim
    thr, zs = [], []
    for x in xs:
        z = KAPPA * math.sqrt((spec.sigma ** 2 + 2 * spec.c * u / KAPPA) * (D + x))
        b = spec.c * u / z if z > 0 else 0.0
        zs.append(z)
        thr.append(bounds.sup_bound_norm(spec.sigma, b, D, x))

    def block(rng, count, blk):
        chi2, sup = _projection_stats(S, spec, rng, count)
        Z = np.sqrt(chi2)
        ok = sup <= u
        return [int(np.count_nonzero((Z >= t) & ok)) for t in thr]

    counts = np.sum(run_blocks(block, reps, seed, threads), axis=0)
    rows = []
    for x, t, z, k in zip(xs, thr, zs, counts):
        est = tail_estimate(int(k), reps, t, math.exp(-x))
        rows.append(_row(x, est, "pass" if _dominated(est) else "fail", z=z, threshold_le_z=t <= z * (1 + 1e-12)))
    return _report("sup_bound", S, spec, reps, seed, rows, u=u)


def chi_mean(D: int, s: float = 1.0) -> float:
    """E|N(0, s^2 I_D)|_2 = s sqrt(2) Gamma((D+1)/2) / Gamma(D/2)."""
    if D == 0:
        return 0.0
    return s * math.sqrt(2.0) * math.exp(special.gammaln((D + 1) / 2) - special.gammaln(D / 2))


def mean_sup_check(S: Subspace, spec: NoiseSpec, reps: int = 100_000, seed: int = 0,
                   threads: int = 1) -> dict:
    """Monte Carlo mean of Z = |Pi_S xi|_2 against sqrt(D) (unit-variance noise)."""
    def block(rng, count, b):
        chi2, _ = _projection_stats(S, spec, rng, count)
        Z = np.sqrt(chi2)
        return math.fsum(Z), math.fsum(Z * Z)

    parts = run_blocks(block, reps, seed, threads)
    s1 = math.fsum(p[0] for p in parts)
    s2 = math.fsum(p[1] for p in parts)
    mean = s1 / reps
    var = max(s2 / reps - mean * mean, 0.0) * reps / max(reps - 1, 1)
    se = math.sqrt(var / reps)
    D = S.dim
    exact = chi_mean(D, spec.p["s"]) if spec.kind == "gaussian" else None
    out = {"experiment": "mean_sup", "space": _space_echo(S), "noise": spec.to_dict(),
           "reps": reps, "seed": seed, "mean": mean, "stderr": se, "sqrt_D": math.sqrt(D),
           "exact_mean": exact,
           "below_sqrt_D": mean <= math.sqrt(D) + 3 * se}
    out["matches_exact"] = None if exact is None else abs(mean - exact) <= 3 * se
    out["pass"] = bool(out["below_sqrt_D"] and out["matches_exact"] is not False)
    return out


def oracle_experiment(collection: ModelCollection, spec: NoiseSpec, f, K: float = 2.0,
                      z: float | None = None, reps: int = 1000, seed: int = 0, threads: int = 1,
                      pen: PenaltyConfig | None = None, true_label: str | None = None) -> dict:
    """Risk of the selected estimator against C(K)[inf_m(risk_m + pen(m)) + R].

    The right side uses the exact risks |f - Pi_m f|^2 + var(xi_1) D_m; the
    simulated per-model risks are reported next to them.  The verdict is
    LHS <= RHS + 3 stderr.
    """
    _need_reps(reps, MIN_ORACLE_REPS)
    f = np.asarray(f, dtype=float)
    if f.shape != (collection.n,):
        raise ValueError(f"signal must have length {collection.n}")
    if pen is None:
        pen = penalty(collection, spec.sigma, spec.c, K, z)
    labels = collection.labels()
    M = len(labels)
    true_idx = labels.index(true_label) if true_label is not None else None

    def block(rng, count, b):
        Y = f + noise_mod.draw(spec, (count, f.size), rng)
        chosen, loss = select_batch(collection, pen, Y, f)
        sel = loss[np.arange(count), chosen]
        hits = int(np.count_nonzero(chosen == true_idx)) if true_idx is not None else 0
        return (math.fsum(sel), math.fsum(sel * sel), [math.fsum(loss[:, j]) for j in range(M)],
                np.bincount(chosen, minlength=M), hits)

    parts = run_blocks(block, reps, seed, threads)
    s1 = math.fsum(p[0] for p in parts)
    s2 = math.fsum(p[1] for p in parts)
    lhs = s1 / reps
    var = max(s2 / reps - lhs * lhs, 0.0) * reps / max(reps - 1, 1)
    se = math.sqrt(var / reps)
    mc_risk = {l: math.fsum(p[2][j] for p in parts) / reps for j, l in enumerate(labels)}
    freq = np.sum([p[3] for p in parts], axis=0)
    exact = exact_risks(collection, f, spec.variance)
    rhs = oracle_rhs(collection, pen, exact)
    rhs_mc = oracle_rhs(collection, pen, mc_risk)
    top = int(np.argmax(freq))
    out = {
        "experiment": "oracle",
        "family": collection.family,
        "models": M,
        "noise": spec.to_dict(),
        "reps": reps, "seed": seed,
        "K": pen.K, "z": pen.z, "u": pen.u, "penalty_mode": pen.mode,
        "lambda2_sn": pen.lambda2_sn, "lambda_bar_inf": pen.lambda_bar_inf,
        "Sigma": collection.sigma,
        "lhs": lhs, "stderr": se,
        "rhs": rhs["rhs"], "C_K": rhs["C_K"], "inf_term": rhs["inf"], "argmin": rhs["argmin"],
        "R": rhs["R"],
        "risk_mode": "exact",
        "rhs_monte_carlo": rhs_mc["rhs"],
        "most_selected": labels[top],
        "most_selected_freq": int(freq[top]) / reps,
    }
    out["per_model"] = [
        {"label": m.label, "D_m": m.dim, "Delta_m": m.weight, "pen": pen[m.label],
         "risk_exact": exact[m.label], "risk_mc": mc_risk[m.label], "selected": int(freq[j]) / reps}
        for j, m in enumerate(collection)]
    if true_idx is not None:
        out["true_model"] = true_label
        out["recovery_rate"] = sum(p[4] for p in parts) / reps
    out["pass"] = bool(lhs <= rhs["rhs"] + 3 * se)
    return out


def counter_example(D: int, p: float | None = None, us: Sequence[float] | None = None,
                    C: float = 1.0, reps: int = 10_000, seed: int = 0, threads: int = 1) -> dict:
    """Mixture process: with probability p, Z = |N(0, I_D)|_2, otherwise Z = 0.

    Tests the concentration-type claim P(Z >= C p sqrt(D) + C(sqrt(u) + u)) <= e^-u
    and reports a violation when the lower Clopper-Pearson endpoint exceeds
    e^-u.  The pure Gaussian process (p = 1) is run alongside as a control
    against sqrt(D) + sqrt(2u).
    """
    if C < 1:
        raise ValueError("C must be at least 1")
    if p is None:
        p = 1.0 / (2.0 * C)
    if not 0 < p <= 1:
        raise ValueError("p must lie in (0, 1]")
    if us is None:
        us = [math.log(2.0 / p)]
    thr = [C * p * math.sqrt(D) + C * (math.sqrt(u) + u) for u in us]
    ctrl = [bounds.gaussian_concentration_threshold(D, u) for u in us]

    def block(rng, count, b):
        active = rng.random(count) < p
        Z = np.where(active, np.sqrt(rng.chisquare(D, count)), 0.0)
        G = np.sqrt(rng.chisquare(D, count))
        return ([int(np.count_nonzero(Z >= t)) for t in thr],
                [int(np.count_nonzero(G >= t)) for t in ctrl])

    parts = run_blocks(block, reps, seed, threads)
    mix = np.sum([q[0] for q in parts], axis=0)
    gau = np.sum([q[1] for q in parts], axis=0)
    rows, control = [], []
    for u, t, k in zip(us, thr, mix):
        est = tail_estimate(int(k), reps, t, math.exp(-u))
        rows.append(_row(u, est, "violation" if est.ci_lo > est.bound else "no_violation"))
    for u, t, k in zip(us, ctrl, gau):
        est = tail_estimate(int(k), reps, t, math.exp(-u))
        control.append(_row(u, est, "pass" if _dominated(est) else "fail"))
    found = any(r["verdict"] == "violation" for r in rows)
    control_ok = all(r["verdict"] == "pass" for r in control)
    return {"experiment": "counterexample", "D": D, "p": p, "C": C, "reps": reps, "seed": seed,
            "rows": rows, "control": control, "violation_found": found,
            "control_pass": control_ok, "pass": bool(found and control_ok)}


def mixture_increment_check(p: float, lams, dists) -> bool:
    """E exp(lam (X_t - X_s)) <= exp(lam^2 d^2 / 2) for the p-mixture of the
    Gaussian process and the zero process, over the given grids."""
    lam = np.asarray(lams, dtype=float)[:, None]
    d = np.asarray(dists, dtype=float)[None, :]
    log_gauss = lam ** 2 * d ** 2 / 2
    with np.errstate(divide="ignore"):
        log_mix = np.logaddexp(math.log(p) + log_gauss, math.log1p(-p) if p < 1 else -np.inf)
    return bool(np.all(log_mix <= log_gauss + 1e-15 * np.maximum(1.0, log_gauss)))


def _report(name, S, spec, reps, seed, rows, **extra) -> dict:
    out = {"experiment": name, "space": _space_echo(S), "noise": spec.to_dict(),
           "reps": reps, "seed": seed}
    out.update(extra)
    out["rows"] = rows
    out["pass"] = all(r["verdict"] == "pass" for r in rows)
    return out
