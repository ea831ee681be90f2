"""Command-line interface: gen, fit, bench, eval and diag-rules."""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .augmentation import Rule, RuleConfig, make_rng, rule_constants, rule_norm_sq
from .data_io import (
    Dataset,
    Kind,
    Schema,
    ScalingRecord,
    boundary_mask,
    gen_synthetic,
    hull_boundary_scores,
    load_csv,
    normalize,
    rmse,
    save_dataset,
    split,
)
from .driver import DriverConfig, FitTrace, Variant, rel_obj, run
from .errors import CvxRegError
from .primal_cert import MaxAffineModel, predict
from .problem import build_problem

log = logging.getLogger("cvxreg")

RHO_ZERO_SURROGATE = 1e-12


# ---------------------------------------------------------------- parsing


def _add_data_args(ap: argparse.ArgumentParser, required: bool = True) -> None:
    src = ap.add_mutually_exclusive_group(required=required)
    src.add_argument("--gen", choices=["sd1", "sd2"], help="synthetic generator")
    src.add_argument("--csv", type=Path, help="headed numeric CSV")
    ap.add_argument("--response", default="y", help="response column for --csv")
    ap.add_argument("--n", type=int, default=1000)
    ap.add_argument("--d", type=int, default=4)
    ap.add_argument("--snr", type=float, default=3.0)
    ap.add_argument("--data-seed", type=int, default=None,
                    help="generator seed (defaults to --seed)")


def _add_algo_args(ap: argparse.ArgumentParser) -> None:
    ap.add_argument("--rho", type=float, required=True)
    ap.add_argument("--variant", choices=[v.value for v in Variant], default="two-stage")
    ap.add_argument("--rule", choices=[r.value for r in Rule], default="rtg")
    ap.add_argument("--p", type=int, default=None, dest="P")
    ap.add_argument("--k", type=int, default=None, dest="K")
    ap.add_argument("--m", type=int, default=None, dest="M")
    ap.add_argument("--g", type=int, default=None, dest="G")
    ap.add_argument("--orientation", choices=["row", "col"], default="row")
    ap.add_argument("--tau", type=float, default=1e-4)
    ap.add_argument("--tau-stage2", type=float, default=1e-8)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--max-iters", type=int, default=100_000)
    ap.add_argument("--max-seconds", type=float, default=None)
    ap.add_argument("--final-scan", action="store_true",
                    help="full scan before declaring convergence")
    ap.add_argument("--knn", type=int, default=0, help="k-nearest-neighbour warm start")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cvxreg", description="Active-set convex regression")
    ap.add_argument("--version", action="version", version=f"cvxreg {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    g = sub.add_parser("gen", help="write a synthetic dataset snapshot")
    g.add_argument("--gen", choices=["sd1", "sd2"], required=True)
    g.add_argument("--n", type=int, default=1000)
    g.add_argument("--d", type=int, default=4)
    g.add_argument("--snr", type=float, default=3.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", type=Path, required=True, help="CSV path; provenance goes next to it")

    f = sub.add_parser("fit", help="fit one model")
    _add_data_args(f)
    _add_algo_args(f)
    f.add_argument("--certify", action="store_true")
    f.add_argument("--lstar", type=float, default=None, help="reference objective for relObj")
    f.add_argument("--out", type=Path, required=True)

    b = sub.add_parser("bench", help="time-to-target over configs and repetitions")
    _add_data_args(b)
    _add_algo_args(b)
    b.add_argument("--configs", nargs="+", default=None,
                   help="VARIANT:RULE entries; defaults to the single --variant/--rule")
    b.add_argument("--reps", type=int, default=3)
    b.add_argument("--target", type=float, default=5e-2)
    b.add_argument("--out", type=Path, required=True)

    e = sub.add_parser("eval", help="RMSE of a saved model on a dataset")
    e.add_argument("--model", type=Path, required=True)
    _add_data_args(e)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--boundary-q", type=float, default=0.1)
    e.add_argument("--fw-iters", type=int, default=200)
    e.add_argument("--out", type=Path, default=None)

    r = sub.add_parser("diag-rules", help="Monte Carlo check of the rule-norm sandwich")
    r.add_argument("--n", type=int, default=12)
    r.add_argument("--rules", nargs="+", choices=[x.value for x in Rule],
                   default=[x.value for x in Rule])
    r.add_argument("--p", type=int, default=None, dest="P")
    r.add_argument("--k", type=int, default=None, dest="K")
    r.add_argument("--m", type=int, default=None, dest="M")
    r.add_argument("--g", type=int, default=None, dest="G")
    r.add_argument("--mc", type=int, default=10_000)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--out", type=Path, default=None)
    return ap


# ---------------------------------------------------------------- helpers


def _resolve_rho(rho: float) -> float:
    if rho == 0.0:
        log.warning("rho=0 is not supported by the dual; using %g instead", RHO_ZERO_SURROGATE)
        return RHO_ZERO_SURROGATE
    return rho


def _load_data(args) -> tuple[Dataset, ScalingRecord]:
    """Normalized dataset and the scaling that maps it back."""
    if args.gen:
        seed = args.seed if args.data_seed is None else args.data_seed
        raw = gen_synthetic(Kind(args.gen.upper()), args.n, args.d, args.snr, seed,
                            normalize_output=False)
    else:
        raw = load_csv(args.csv, Schema(args.response))
    return normalize(raw)


def _driver_config(args, variant=None, rule=None, seed=None, certify=False) -> DriverConfig:
    rc = RuleConfig(Rule(rule or args.rule), args.P, args.K, args.M, args.G,
                    args.orientation, args.tau)
    return DriverConfig(
        variant=Variant(variant or args.variant),
        rule=rc,
        tau_stage2=args.tau_stage2,
        max_outer_iters=args.max_iters,
        max_wall_time=args.max_seconds,
        certify=certify,
        final_scan=args.final_scan,
        knn_init=args.knn,
        seed=args.seed if seed is None else seed,
    )


def _write_json(path: Path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, default=_jsonable)


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not serializable: {type(o).__name__}")


def _resolved_args(args) -> dict:
    return {k: v for k, v in vars(args).items() if k != "func"}


def _finite(x):
    return x if x is None or math.isfinite(x) else None


# ---------------------------------------------------------------- commands


def cmd_gen(args) -> int:
    ds = gen_synthetic(Kind(args.gen.upper()), args.n, args.d, args.snr, args.seed,
                       normalize_output=False)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    save_dataset(ds, args.out)
    print(f"wrote {args.out} ({ds.n} rows, {ds.d} features)")
    return 0


def cmd_fit(args) -> int:
    rho = _resolve_rho(args.rho)
    ds, scaling = _load_data(args)
    p = build_problem(ds.X, ds.y, rho)
    cfg = _driver_config(args, certify=args.certify)
    args.out.mkdir(parents=True, exist_ok=True)
    res = run(p, cfg, L_ref=args.lstar)
    model = res.model
    model.scaling = scaling.to_dict()
    model.save(args.out / "model.json")
    res.trace.to_csv(args.out / "trace.csv", L_ref=args.lstar)
    fitted = predict(model, ds.X)
    summary = {
        "status": res.status,
        "outerIters": len(res.trace),
        "finalL": res.L,
        "relObj": None if args.lstar is None else rel_obj(res.L, args.lstar),
        "sizeW": len(res.W),
        "seconds": res.trace[-1].seconds if res.trace else 0.0,
        "trainRmse": {
            "normalized": rmse(fitted, ds.y),
            "original": rmse(scaling.invert_y(fitted), scaling.invert_y(ds.y)),
        },
        "rho": rho,
    }
    if res.certification is not None:
        c = res.certification
        summary.update(maxViolation=c.max_violation, gap=c.gap, relativeGap=c.rel_gap,
                       lowerBound=c.L_lower)
    _write_json(args.out / "summary.json", summary)
    _write_json(args.out / "config.json", {"args": _resolved_args(args), "driver": cfg.to_dict()})
    print(f"{res.status}: L={res.L:.10g} |W|={len(res.W)} iters={len(res.trace)}")
    return 0


def _bench_job(job):
    X, y, rho, cfg = job
    res = run(build_problem(X, y, rho), cfg)
    return res.trace


def _time_to_target(trace: FitTrace, L_ref: float, target: float):
    for r in trace:
        if rel_obj(r.L, L_ref) <= target:
            return r.seconds
    return None


def _median_mad(values):
    v = np.asarray(values, dtype=float)
    med = float(np.median(v))
    return med, float(np.median(np.abs(v - med)))


def cmd_bench(args) -> int:
    rho = _resolve_rho(args.rho)
    ds, _ = _load_data(args)
    configs = args.configs or [f"{args.variant}:{args.rule}"]
    jobs, labels = [], []
    for spec_ in configs:
        variant, _, rule = spec_.partition(":")
        for rep in range(args.reps):
            cfg = _driver_config(args, variant, rule or args.rule, seed=args.seed + rep)
            jobs.append((ds.X, ds.y, rho, cfg))
            labels.append((spec_, rep))
    workers = max(1, int(os.environ.get("CVXREG_THREADS", "1")))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            traces = list(ex.map(_bench_job, jobs))
    else:
        traces = [_bench_job(j) for j in jobs]

    L_star = min(t[-1].L for t in traces)
    args.out.mkdir(parents=True, exist_ok=True)
    rows = []
    for spec_ in configs:
        times = []
        for (lab, rep), tr in zip(labels, traces):
            if lab != spec_:
                continue
            tr.to_csv(args.out / f"trace_{lab.replace(':', '_')}_{rep}.csv", L_ref=L_star)
            t = _time_to_target(tr, L_star, args.target)
            times.append(t)
        hit = [t for t in times if t is not None]
        if len(hit) == len(times):
            med, mad = _median_mad(hit)
            rows.append((spec_, f"{med:.3f}", f"{mad:.3f}"))
        else:
            rows.append((spec_, "-", "-"))
    with open(args.out / "table.csv", "w") as fh:
        fh.write("config,median_s,mad_s\n")
        for r in rows:
            fh.write(",".join(r) + "\n")
    _write_json(args.out / "config.json", {"args": _resolved_args(args), "Lstar": L_star})
    print(f"L* = {L_star:.12g} (best of {len(traces)} runs), target relObj {args.target:g}")
    print(f"{'config':<28}{'median(s)':>12}{'MAD(s)':>12}")
    for spec_, med, mad in rows:
        print(f"{spec_:<28}{med:>12}{mad:>12}")
    return 0


def cmd_eval(args) -> int:
    model = MaxAffineModel.load(args.model)
    if args.gen:
        seed = args.seed if args.data_seed is None else args.data_seed
        ds = gen_synthetic(Kind(args.gen.upper()), args.n, args.d, args.snr, seed,
                           normalize_output=False)
    else:
        ds = load_csv(args.csv, Schema(args.response))
    if model.scaling is not None:
        sc = ScalingRecord.from_dict(model.scaling)
        pred = sc.invert_y(predict(model, sc.apply_x(ds.X)))
    else:
        pred = predict(model, ds.X)
    anchors = Dataset(model.anchors, np.zeros(model.n))
    query = Dataset(ds.X if model.scaling is None else sc.apply_x(ds.X), ds.y)
    scores = hull_boundary_scores(anchors, query, args.fw_iters)
    mask = boundary_mask(scores, args.boundary_q)
    out = {
        "n": ds.n,
        "rmse": rmse(pred, ds.y),
        "boundaryRmse": rmse(pred, ds.y, mask) if mask.any() else None,
        "interiorRmse": rmse(pred, ds.y, ~mask) if (~mask).any() else None,
        "boundaryQuantile": args.boundary_q,
    }
    print(json.dumps(out, indent=2))
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        _write_json(args.out / "eval.json", out)
        _write_json(args.out / "config.json", {"args": _resolved_args(args)})
    return 0


def cmd_diag_rules(args) -> int:
    rng = make_rng(args.seed)
    n = args.n
    theta = rng.standard_normal(n * (n - 1))
    norm_sq = float(np.sum(theta * theta))
    report = []
    ok = True
    print(f"n={n}  ||theta||^2={norm_sq:.6g}  samples={args.mc}")
    print(f"{'rule':<14}{'E_hat':>12}{'se':>10}{'alpha*E':>12}{'beta*E':>12}  check")
    for name in args.rules:
        cfg = RuleConfig(Rule(name), args.P, args.K, args.M, args.G).resolved(n)
        est, se = rule_norm_sq(theta, cfg, rng, args.mc)
        alpha, beta = rule_constants(cfg, n)
        lo_ok = alpha * (est + 3 * se) >= norm_sq
        hi_ok = norm_sq >= beta * (est - 3 * se)
        passed = bool(lo_ok and hi_ok)
        ok &= passed
        report.append({"rule": name, "estimate": est, "stderr": se, "alpha": alpha,
                       "beta": beta, "ratio": norm_sq / est if est > 0 else None,
                       "pass": passed})
        print(f"{name:<14}{est:>12.6g}{se:>10.3g}{alpha * est:>12.6g}{beta * est:>12.6g}  "
              f"{'PASS' if passed else 'FAIL'}")
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        _write_json(args.out / "diag_rules.json", {"n": n, "normSq": norm_sq, "rules": report})
        _write_json(args.out / "config.json", {"args": _resolved_args(args)})
    return 0 if ok else 1


COMMANDS = {
    "gen": cmd_gen,
    "fit": cmd_fit,
    "bench": cmd_bench,
    "eval": cmd_eval,
    "diag-rules": cmd_diag_rules,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.cmd](args)
    except (CvxRegError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
