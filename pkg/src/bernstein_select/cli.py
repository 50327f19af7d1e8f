"""Command-line interface.

    bernstein-select SUBCOMMAND [key=value ...] [--config PATH] [--seed N]
                     [--reps N] [--out DIR] [--threads N]

Exit status: 0 when every verdict passes, 2 when a verdict fails, 1 on a
configuration or runtime error (in which case no output file is written).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import math
import os
import sys
import tempfile
import warnings

import numpy as np

from . import bounds, models, selection, simulate
from .config import (ConfigError, NoiseConfig, RunConfig, SUBCOMMANDS, parse_config,
                     to_dict)
from .linalg import Subspace
from .noise import NoiseSpec, certify, make

TAIL_COLUMNS = ("x", "threshold", "exceed", "reps", "ci_lo", "ci_hi", "bound", "verdict")
LEDGER_COLUMNS = ("label", "D_m", "Delta_m", "pen")


class CliError(Exception):
    pass


# ---------------------------------------------------------------------------
# serialization helpers

def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return None
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return v


def dumps_json(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2) + "\n"


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def dumps_csv(rows, columns) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell(r.get(c)) for c in columns])
    return buf.getvalue()


def emit_penalty_ledger(collection: models.ModelCollection, pen: selection.PenaltyConfig) -> str:
    """CSV with one row (label, D_m, Delta_m, pen) per model."""
    rows = [{"label": m.label, "D_m": m.dim, "Delta_m": m.weight, "pen": pen[m.label]}
            for m in collection]
    return dumps_csv(rows, LEDGER_COLUMNS)


def write_atomic(out_dir: str, files: dict) -> list[str]:
    """Write every file to a temporary name first, then rename them all."""
    os.makedirs(out_dir, exist_ok=True)
    staged = []
    try:
        for name, text in files.items():
            fd, tmp = tempfile.mkstemp(dir=out_dir, prefix=f".{name}.", suffix=".tmp")
            staged.append((tmp, os.path.join(out_dir, name)))
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
    except BaseException:
        for tmp, _ in staged:
            if os.path.exists(tmp):
                os.remove(tmp)
        raise
    for tmp, final in staged:
        os.replace(tmp, final)
    return [final for _, final in staged]


# ---------------------------------------------------------------------------
# building blocks from a config

def build_collection(cfg: RunConfig) -> tuple[models.ModelCollection, list[str]]:
    fam = cfg.family
    weights = fam.weights
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", models.TheoryConditionWarning)
        if fam.kind == "trigonometric":
            C = models.build_trig_collection(cfg.n, fam.dbar, fam.mode, weights, cfg.constants.a)
        else:
            finest = models.IntervalPartition(cfg.n, cfg.finest_blocks())
            if fam.kind == "histogram":
                C = models.build_histogram_collection(cfg.n, finest, weights, cfg.constants.a)
            else:
                C = models.build_piecewise_poly_collection(cfg.n, finest, fam.degree, weights,
                                                           cfg.constants.a, fam.grid)
    notes = [str(w.message) for w in caught if issubclass(w.category, models.TheoryConditionWarning)]
    return C, notes


def experiment_space(cfg: RunConfig) -> Subspace:
    fam = cfg.family
    if fam.kind == "trigonometric":
        m = fam.model if fam.model is not None else range(2 * fam.dbar + 1)
        return models.trig_basis(cfg.n, m, fam.dbar)
    part = models.IntervalPartition(cfg.n, fam.model if fam.model is not None else cfg.finest_blocks())
    if fam.kind == "histogram":
        return models.histogram_basis(cfg.n, part)
    return models.piecewise_poly_basis(cfg.n, part, fam.degree, fam.grid)


def signal_vector(cfg: RunConfig) -> tuple[np.ndarray, models.IntervalPartition]:
    part = models.IntervalPartition(cfg.n, cfg.signal_blocks())
    f = np.repeat(np.asarray(cfg.signal.values, dtype=float), part.sizes)
    return f, part


def _echo(cfg: RunConfig) -> dict:
    d = to_dict(cfg)
    d.pop("out")
    return d


def _kv(params) -> dict:
    out = {}
    for p in params:
        if "=" not in p:
            raise CliError(f"expected key=value, got {p!r}")
        k, v = p.split("=", 1)
        for conv in (int, float):
            try:
                out[k] = conv(v)
                break
            except ValueError:
                continue
        else:
            out[k] = v
    return out


def _no_params(sub, params):
    if params:
        raise CliError(f"{sub} takes no key=value parameters (use --config)")


# ---------------------------------------------------------------------------
# compute-bounds

def _f(x):
    return float(x)


_BOUNDS = {
    "bernsteinQuantile": (bounds.bernstein_quantile, {"v2": _f, "c": _f, "u": _f}),
    "bernsteinTail": (bounds.bernstein_tail, {"v2": _f, "c": _f, "x": _f}),
    "supBoundNorm": (bounds.sup_bound_norm, {"v": _f, "chainB": _f, "D": int, "x": _f}),
    "chiThreshold": (bounds.chi_threshold, {"sigma": _f, "c": _f, "u": _f, "D": int, "x": _f}),
    "supNormTail": (bounds.sup_norm_tail, {"lambda2": _f, "sigma": _f, "c": _f, "x": _f, "n": int}),
    "truncatedMomentBound": (bounds.truncated_moment_bound,
                             {"a": _f, "alpha": _f, "beta": _f, "x0": _f, "p": int}),
    "constantCK": (bounds.constant_ck, {"K": _f}),
    "remainderR": (bounds.remainder_r,
                   {"family": str, "sigma": _f, "c": _f, "Sigma": _f, "u": _f, "lambdaBarInf": _f,
                    "z": _f, "a": _f, "expB": _f, "d": int, "dbar": int, "n": int}),
    "familyPenaltyFactor": (bounds.family_penalty_factor,
                            {"family": str, "sigma": _f, "c": _f, "a": _f, "expB": _f, "d": int}),
    "corollaryRemainder": (bounds.corollary_remainder, {"K": _f, "sigma": _f, "Sigma": _f}),
    "computeU": (selection.compute_u,
                 {"sigma": _f, "c": _f, "lambdaBarInf": _f, "lambda2Sn": _f, "n": int, "z": _f}),
    "chainingThreshold": (bounds.chaining_threshold, {"H": _f, "v": _f, "chainB": _f, "x": _f}),
    "proofRecipeH": (bounds.proof_recipe_h, {"D": int, "v": _f, "b": _f}),
    "hConstantCheck": (bounds.h_constant_check, {"D": int, "v": _f, "b": _f}),
    "coveringBound": (bounds.covering_bound, {"delta": _f, "D": int}),
    "gaussianConcentrationThreshold": (bounds.gaussian_concentration_threshold, {"D": int, "u": _f}),
    "boundedThresholdB1": (bounds.bounded_threshold_b1, {"D": int, "x": _f, "a": _f, "lambda2": _f}),
    "boundedThresholdB2": (bounds.bounded_threshold_b2, {"D": int, "x": _f, "a": _f}),
    "concentrationThreshold": (bounds.concentration_threshold,
                               {"EZ": _f, "v2": _f, "c": _f, "u": _f, "C": _f}),
}
_PY_NAMES = {"chainB": "chain_b", "lambdaBarInf": "lambda_bar_inf", "expB": "exp_b",
             "lambda2Sn": "lambda2_sn"}


def compute_bounds(params) -> tuple[dict, dict, bool]:
    if not params:
        raise CliError("compute-bounds needs a bound name; one of " + ", ".join(_BOUNDS))
    name, kv = params[0], _kv(params[1:])
    if name not in _BOUNDS:
        raise CliError(f"unknown bound {name!r}; one of " + ", ".join(_BOUNDS))
    fn, spec = _BOUNDS[name]
    unknown = sorted(set(kv) - set(spec))
    if unknown:
        raise CliError(f"{name} does not take {', '.join(unknown)} (expects {', '.join(spec)})")
    inputs = {k: spec[k](v) for k, v in kv.items()}
    kwargs = {_PY_NAMES.get(k, k): v for k, v in inputs.items()}
    try:
        result = fn(**kwargs)
    except TypeError as exc:
        raise CliError(f"{name}: {exc}") from None
    if isinstance(result, bounds.BoundReport):
        report = result
    elif isinstance(result, tuple) and name == "truncatedMomentBound":
        report = bounds.BoundReport(name, inputs, value=result[0], values={"phi": result[1]})
    else:
        report = bounds.BoundReport(name, inputs, value=float(result))
    out = report.to_dict()
    return out, {"compute_bounds.json": dumps_json(out)}, report.passed is not False


# ---------------------------------------------------------------------------
# subcommands

def certify_noise(cfg: RunConfig, params) -> tuple[dict, dict, bool]:
    kv = _kv(params)
    grid = int(kv.pop("grid", 1000))
    nc = cfg.noise
    if "kind" in kv:
        kind = kv.pop("kind")
        nc = NoiseConfig(kind=kind, params=tuple(make(kind).p.items()))
    sigma = kv.pop("sigma", nc.sigma)
    c = kv.pop("c", nc.c)
    p = dict(nc.params)
    for k in list(kv):
        if k not in p:
            raise CliError(f"unknown noise parameter {k!r} for {nc.kind} (expects {', '.join(p)})")
        p[k] = float(kv.pop(k))
    spec = NoiseSpec.from_dict({"kind": nc.kind, "params": p, "sigma": sigma, "c": c})
    rep = certify(spec, grid_size=grid)
    return rep, {"certify_noise.json": dumps_json(rep)}, rep["pass"]


def _penalty(cfg: RunConfig, C: models.ModelCollection, spec: NoiseSpec) -> selection.PenaltyConfig:
    k = cfg.constants
    return selection.penalty(C, spec.sigma, spec.c, k.K, k.z, exp_b=k.expB, mode=k.penalty,
                             multiplier=k.multiplier, a=k.a)


def _pen_echo(pen: selection.PenaltyConfig) -> dict:
    return {"mode": pen.mode, "K": pen.K, "z": pen.z, "u": pen.u, "factor": pen.factor,
            "multiplier": pen.multiplier, "lambda2_sn": pen.lambda2_sn,
            "lambda_bar_inf": pen.lambda_bar_inf}


def select_cmd(cfg: RunConfig) -> tuple[dict, dict, bool]:
    try:
        Y = np.loadtxt(cfg.data, delimiter=",", comments="#", ndmin=1).ravel()
    except (OSError, ValueError) as exc:
        raise CliError(f"cannot read data file {cfg.data!r}: {exc}") from None
    if Y.size != cfg.n:
        raise CliError(f"data file has {Y.size} values, expected n = {cfg.n}")
    C, notes = build_collection(cfg)
    spec = cfg.noise.spec()
    pen = _penalty(cfg, C, spec)
    res = selection.select(C, pen, Y)
    rep = {"config": _echo(cfg), "noise": spec.to_dict(), "penalty": _pen_echo(pen),
           "Sigma": C.sigma, **res.to_dict(), "notes": notes}
    files = {"selection.json": dumps_json(rep), "penalty_ledger.csv": emit_penalty_ledger(C, pen)}
    return rep, files, True


def _tail_files(stem, rep, extra_cols=()):
    return {f"{stem}.json": dumps_json(rep),
            f"{stem}.csv": dumps_csv(rep["rows"], TAIL_COLUMNS + tuple(extra_cols))}


def run_chi(cfg: RunConfig, threads: int):
    S = experiment_space(cfg)
    spec = cfg.noise.spec()
    u = cfg.experiment.u if cfg.experiment.u is not None else simulate.default_u(S, spec, cfg.constants.z)
    e = cfg.experiment
    rep = simulate.chi_tail_experiment(S, spec, e.xs, u, e.reps, e.seed, threads)
    rep = {"config": _echo(cfg), **rep}
    return rep, _tail_files("run_chi", rep), rep["pass"]


def run_supnorm(cfg: RunConfig, threads: int):
    S = experiment_space(cfg)
    e = cfg.experiment
    rep = simulate.sup_norm_tail_experiment(S, cfg.noise.spec(), e.xs, e.reps, e.seed, threads)
    rep = {"config": _echo(cfg), **rep}
    return rep, _tail_files("run_supnorm", rep), rep["pass"]


def run_oracle(cfg: RunConfig, threads: int):
    C, notes = build_collection(cfg)
    spec = cfg.noise.spec()
    f, part = signal_vector(cfg)
    pen = _penalty(cfg, C, spec)
    true_label = part.label if cfg.family.kind != "trigonometric" and part.label in C.labels() else None
    e = cfg.experiment
    rep = simulate.oracle_experiment(C, spec, f, reps=e.reps, seed=e.seed, threads=threads,
                                     pen=pen, true_label=true_label)
    rep = {"config": _echo(cfg), **rep, "notes": notes}
    cols = ("label", "D_m", "Delta_m", "pen", "risk_exact", "risk_mc", "selected")
    files = {"run_oracle.json": dumps_json(rep), "run_oracle.csv": dumps_csv(rep["per_model"], cols)}
    return rep, files, rep["pass"]


def run_counterexample(cfg: RunConfig, threads: int):
    ce, e = cfg.counterexample, cfg.experiment
    rep = simulate.counter_example(ce.D, ce.p, ce.us, ce.C, e.reps, e.seed, threads)
    rep = {"config": _echo(cfg), **rep}
    rows = ([dict(r, process="mixture") for r in rep["rows"]]
            + [dict(r, process="gaussian_control") for r in rep["control"]])
    files = {"run_counterexample.json": dumps_json(rep),
             "run_counterexample.csv": dumps_csv(rows, TAIL_COLUMNS + ("process",))}
    return rep, files, rep["pass"]


def unit_ball_cloud(rng: np.random.Generator, count: int, D: int) -> np.ndarray:
    """Uniform points in the Euclidean unit ball of R^D."""
    g = rng.standard_normal((count, D))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return g * rng.random((count, 1)) ** (1.0 / D)


def covering_cmd(cfg: RunConfig, params) -> tuple[dict, dict, bool]:
    kv = _kv(params)
    allowed = {"D", "delta", "points", "clouds", "norm"}
    if set(kv) - allowed:
        raise CliError(f"covering takes {', '.join(sorted(allowed))}")
    D, delta = int(kv.get("D", 2)), float(kv.get("delta", 0.5))
    count, clouds, norm = int(kv.get("points", 200)), int(kv.get("clouds", 10)), str(kv.get("norm", "l2"))
    if D < 1 or delta <= 0 or count < 1 or clouds < 1:
        raise CliError("covering needs D >= 1, delta > 0, points >= 1, clouds >= 1")
    bound = bounds.covering_bound(delta, D)
    rows = []
    for i in range(clouds):
        P = unit_ball_cloud(np.random.default_rng([cfg.experiment.seed, i]), count, D)
        net = bounds.covering_greedy(P, delta, norm)
        sep = bounds.net_is_separated(P, net, delta, norm)
        cov = bounds.net_is_covering(P, net, delta, norm)
        ok = sep and cov and (norm != "l2" or len(net) <= bound)
        rows.append({"cloud": i, "points": count, "net_size": len(net), "bound": bound,
                     "separated": sep, "covering": cov, "verdict": "pass" if ok else "fail"})
    rep = {"D": D, "delta": delta, "norm": norm, "seed": cfg.experiment.seed, "rows": rows,
           "pass": all(r["verdict"] == "pass" for r in rows)}
    cols = ("cloud", "points", "net_size", "bound", "separated", "covering", "verdict")
    return rep, {"covering.json": dumps_json(rep), "covering.csv": dumps_csv(rows, cols)}, rep["pass"]


def chaining_cmd(cfg: RunConfig, params) -> tuple[dict, dict, bool]:
    kv = _kv(params)
    allowed = {"D", "v", "b", "points"}
    if set(kv) - allowed:
        raise CliError(f"chaining-h takes {', '.join(sorted(allowed))}")
    D, v, b = int(kv.get("D", 1)), float(kv.get("v", 1.0)), float(kv.get("b", 0.0))
    count = int(kv.get("points", 0))
    rep = bounds.h_constant_check(D, v, b).to_dict()
    ok = rep["pass"]
    if count > 0:
        if D == 1:
            P = np.linspace(-1.0, 1.0, count)[:, None]
        else:
            P = unit_ball_cloud(np.random.default_rng(cfg.experiment.seed), count, D)
        tree = bounds.build_proof_tree(P, v, b)
        H = bounds.chaining_h(tree)
        cap = bounds.sup_bound_norm(v, b, D, 0.0)
        rep["tree"] = {"points": count, "levels": len(tree.levels), "cell_counts": tree.cell_counts(),
                       "H": H, "sup_bound_norm": cap, "H_le_bound": H <= cap}
        ok = ok and H <= cap
    rep["pass"] = bool(ok)
    return rep, {"chaining_h.json": dumps_json(rep)}, rep["pass"]


# ---------------------------------------------------------------------------
# entry point

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="bernstein-select", description=__doc__.split("\n\n")[0])
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("params", nargs="*", help="NAME and key=value parameters")
    p.add_argument("--config", help="YAML run configuration")
    p.add_argument("--seed", type=int)
    p.add_argument("--reps", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--threads", type=int, default=1, help="worker threads (speed only)")
    return p


def load_config(args) -> RunConfig:
    text = None
    if args.config is not None:
        try:
            with open(args.config, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise CliError(f"cannot read config {args.config!r}: {exc.strerror}") from None
    cfg = parse_config(text, args.subcommand)
    exp = cfg.experiment
    if args.seed is not None:
        if args.seed < 0:
            raise CliError("--seed must be nonnegative")
        exp = dataclasses.replace(exp, seed=args.seed)
    if args.reps is not None:
        if args.reps < 1:
            raise CliError("--reps must be positive")
        exp = dataclasses.replace(exp, reps=args.reps)
    cfg = dataclasses.replace(cfg, experiment=exp)
    if args.out is not None:
        cfg = dataclasses.replace(cfg, out=args.out)
    return cfg


def run(args) -> int:
    if args.threads < 1:
        raise CliError("--threads must be at least 1")
    sub = args.subcommand
    cfg = load_config(args)
    if sub == "compute-bounds":
        rep, files, ok = compute_bounds(args.params)
    else:
        if sub == "certify-noise":
            rep, files, ok = certify_noise(cfg, args.params)
        elif sub == "covering":
            rep, files, ok = covering_cmd(cfg, args.params)
        elif sub == "chaining-h":
            rep, files, ok = chaining_cmd(cfg, args.params)
        else:
            _no_params(sub, args.params)
            handler = {"select": lambda c: select_cmd(c),
                       "run-chi": lambda c: run_chi(c, args.threads),
                       "run-supnorm": lambda c: run_supnorm(c, args.threads),
                       "run-oracle": lambda c: run_oracle(c, args.threads),
                       "run-counterexample": lambda c: run_counterexample(c, args.threads)}[sub]
            rep, files, ok = handler(cfg)
    written = write_atomic(cfg.out, files)
    for path in written:
        print(path)
    print(f"{sub}: {'pass' if ok else 'FAIL'}")
    return 0 if ok else 2


def main(argv=None) -> int:
    try:
        args = _parser().parse_intermixed_args(argv)
        return run(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
    except (CliError, ValueError, ArithmeticError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())
