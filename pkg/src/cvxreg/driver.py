"""Active-set outer loop on the dual, two-stage control and certification."""
from __future__ import annotations

import csv
import enum
import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .augmentation import Rule, RuleConfig, filter_violated, make_rng, select_candidates
from .dual_solver import SolveMode, solve_reduced
from .errors import ExhaustedCandidates
from .primal_cert import MaxAffineModel, _model_from_scan, scan_columns
from .problem import ActiveSet, PrimalPoint, ProblemData, estimate_sigma, eval_primal, kkt_map

log = logging.getLogger(__name__)

CERTIFY_COST_BUDGET = 5e10


class Variant(str, enum.Enum):
    EAS = "eas"
    ASGD = "asgd"
    TWO_STAGE = "two-stage"


@dataclass
class DriverConfig:
    variant: Variant = Variant.TWO_STAGE
    rule: RuleConfig = field(default_factory=RuleConfig)
    solve_inexact: SolveMode = field(default_factory=SolveMode.inexact)
    solve_exact: SolveMode = field(default_factory=SolveMode.exact)
    # Optional tighter exact mode applied once the active set has settled.
    solve_polish: SolveMode | None = None
    stage_switch_frac: float = 0.005
    stage_switch_rounds: int = 5
    tau_stage2: float = 1e-8
    max_outer_iters: int = 100_000
    max_wall_time: float | None = None
    stop_objective: float | None = None  # stop once L falls to this value
    certify_every: int | None = None
    certify: bool = False
    final_scan: bool = False
    knn_init: int = 0
    sigma_iters: int = 50
    sigma_warm_iters: int = 10
    seed: int = 0

    def __post_init__(self):
        self.variant = Variant(self.variant)
        if not 0 < self.stage_switch_frac < 1:
            raise ValueError("stage_switch_frac must lie in (0, 1)")
        if self.stage_switch_rounds < 1:
            raise ValueError("stage_switch_rounds must be at least 1")
        if self.max_outer_iters < 1:
            raise ValueError("max_outer_iters must be at least 1")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["variant"] = self.variant.value
        out["rule"]["rule"] = self.rule.rule.value
        out["rule"]["orientation"] = self.rule.orientation.value
        for key in ("solve_inexact", "solve_exact", "solve_polish"):
            if getattr(self, key) is not None:
                out[key]["kind"] = getattr(self, key).kind.value
                out[key]["method"] = getattr(self, key).method.value
        return out


@dataclass
class TraceRecord:
    iter: int
    L: float
    size_w: int
    size_delta: int
    scanned: int
    stage: int
    seconds: float
    inner_iters: int
    converged: bool
    rel_obj: float | None = None
    gap: float | None = None


TRACE_COLUMNS = ["iter", "L", "relObj", "sizeW", "sizeDelta", "scanned", "stage",
                 "innerIters", "converged", "gap", "seconds"]


class FitTrace(list):
    """Outer-iteration records in order."""

    def objectives(self) -> np.ndarray:
        return np.array([r.L for r in self])

    def deterministic_view(self) -> list[tuple]:
        """Every field except wall-clock time."""
        return [(r.iter, r.L, r.size_w, r.size_delta, r.scanned, r.stage, r.inner_iters,
                 r.converged, r.gap) for r in self]

    @staticmethod
    def row(r: TraceRecord) -> list:
        return [r.iter, repr(r.L), "" if r.rel_obj is None else repr(r.rel_obj), r.size_w,
                r.size_delta, r.scanned, r.stage, r.inner_iters, int(r.converged),
                "" if r.gap is None else repr(r.gap), f"{r.seconds:.6f}"]

    def to_csv(self, path, L_ref: float | None = None) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TRACE_COLUMNS)
            for r in self:
                if L_ref is not None:
                    r = TraceRecord(**{**asdict(r), "rel_obj": rel_obj(r.L, L_ref)})
                w.writerow(self.row(r))


def rel_obj(L: float, L_ref: float) -> float:
    return (L - L_ref) / max(abs(L_ref), 1.0)


@dataclass
class CertificationReport:
    L: float
    L_lower: float
    gap: float
    rel_gap: float
    max_violation: float
    n_violated: int
    tau: float
    seconds: float

    @property
    def certified(self) -> bool:
        return self.max_violation >= -self.tau


@dataclass
class FitResult:
    lam: np.ndarray
    W: ActiveSet
    primal: PrimalPoint
    model: MaxAffineModel
    trace: FitTrace
    status: str
    certification: CertificationReport | None = None

    @property
    def L(self) -> float:
        return self.trace[-1].L if self.trace else 0.0


def should_switch(history, n: int, frac: float, rounds: int) -> bool:
    """True when each of the last ``rounds`` augmentations added fewer than ``frac * n`` pairs."""
    if len(history) < rounds:
        return False
    return all(h < frac * n for h in list(history)[-rounds:])


def _certify(p, L, primal, scan, tau, t0) -> CertificationReport:
    model = _model_from_scan(p, primal, scan)
    L_lower = -eval_primal(p, model.primal())
    gap = L - L_lower
    min_v = float(scan.min_offdiag.min())
    return CertificationReport(
        L=L,
        L_lower=L_lower,
        gap=gap,
        rel_gap=gap / max(abs(L), 1.0),
        max_violation=min_v,
        n_violated=int(np.sum(scan.min_offdiag < -tau)),
        tau=tau,
        seconds=time.perf_counter() - t0,
    )


def certify(p: ProblemData, result: FitResult, tau_final: float = 1e-6) -> CertificationReport:
    """Full scan over every pair: worst violation, feasible primal and duality gap.

    ``n_violated`` counts columns (points) whose worst violation is below
    ``-tau_final``.
    """
    if float(p.n) ** 2 * p.d > CERTIFY_COST_BUDGET:
        log.warning("certification scans %d pairs; this may take a while", p.n_pairs)
    t0 = time.perf_counter()
    scan = scan_columns(p.X, result.primal.phi, result.primal.xi)
    return _certify(p, result.L, result.primal, scan, tau_final, t0)


def _knn_pairs(X: np.ndarray, k: int):
    n = X.shape[0]
    k = min(k, n - 1)
    sq = np.einsum("ij,ij->i", X, X)
    rows, cols = [], []
    step = max(1, (1 << 22) // n)
    for start in range(0, n, step):
        idx = np.arange(start, min(start + step, n))
        D = sq[idx, None] - 2 * X[idx] @ X.T + sq[None, :]
        D[np.arange(len(idx)), idx] = np.inf
        nn = np.argsort(D, axis=1, kind="stable")[:, :k]
        rows.append(np.repeat(idx, k))
        cols.append(nn.ravel())
    return np.concatenate(rows), np.concatenate(cols)


def _scan_violations(p, prim, W, tau):
    """Most violated pair per point (column block) outside ``W``, when below ``-tau``."""
    rule = RuleConfig(Rule.GREEDY, P=1, orientation="col", tau=tau)
    cands, v = select_candidates(p, prim, W, rule, make_rng(0))
    return filter_violated(cands, v, tau)


def run(
    p: ProblemData,
    cfg: DriverConfig,
    callback: Callable[[TraceRecord], None] | None = None,
    L_ref: float | None = None,
) -> FitResult:
    """Run the active-set method and return the fitted dual, primal and model.

    The outer loop alternates (1) a reduced dual solve, (2) the KKT primal
    image and (3) augmentation by the configured rule.  New pairs enter with
    multiplier zero, so the recorded objective never increases.
    """
    t0 = time.perf_counter()
    n = p.n
    rng = make_rng(cfg.seed)
    rule = cfg.rule.resolved(n)
    W = ActiveSet(n)
    if cfg.knn_init > 0:
        W.extend(*_knn_pairs(p.X, cfg.knn_init))
    lam = np.zeros(len(W))

    final_stage = 2 if cfg.variant is Variant.TWO_STAGE else 1
    stage = 1
    exact = cfg.variant is Variant.EAS
    tau = rule.tau
    required_empty = 1 if rule.rule is Rule.GREEDY else cfg.stage_switch_rounds
    polishing = False

    sigma = 0.0
    sigma_vec = None
    sigma_size = 0
    trace = FitTrace()
    delta_history: list[int] = []
    empty_rounds = 0
    status = "max_outer_iters"
    L = 0.0
    prim = PrimalPoint(np.array(p.y), np.zeros((n, p.d)))

    for m in range(cfg.max_outer_iters):
        if cfg.max_wall_time is not None and time.perf_counter() - t0 > cfg.max_wall_time:
            status = "time_budget"
            break
        mode = cfg.solve_polish if polishing else cfg.solve_exact if exact else cfg.solve_inexact
        if len(W):
            if len(W) != sigma_size:
                iters = cfg.sigma_warm_iters if sigma_vec is not None else cfg.sigma_iters
                est, sigma_vec = estimate_sigma(p, W, sigma_vec, iters, return_vector=True)
                sigma = max(sigma, est)
                sigma_size = len(W)
            lam, rep = solve_reduced(p, W, lam, mode, sigma=sigma)
            sigma = max(sigma, rep.sigma)
            L, converged, inner = rep.final_objective, rep.converged, rep.iters_used
        else:
            L, converged, inner = 0.0, True, 0
        prim = kkt_map(p, W, lam)

        stats = {"scanned": 0}
        try:
            cands, v = select_candidates(p, prim, W, rule, rng, stats)
            delta = filter_violated(cands, v, tau)
        except ExhaustedCandidates:
            delta = np.empty((0, 2), dtype=np.int64)
        size_w = len(W)

        gap = None
        if cfg.certify_every and (m + 1) % cfg.certify_every == 0:
            scan = scan_columns(p.X, prim.phi, prim.xi)
            gap = _certify(p, L, prim, scan, tau, time.perf_counter()).gap

        if len(delta) == 0 and converged:
            empty_rounds += 1
        else:
            empty_rounds = 0
        if stage == final_stage and empty_rounds >= required_empty and cfg.final_scan:
            delta = _scan_violations(p, prim, W, tau)
            stats["scanned"] += p.n_pairs
            if len(delta):
                empty_rounds = 0
        added = W.extend(delta[:, 0], delta[:, 1])
        lam = np.concatenate([lam, np.zeros(added)])

        rec = TraceRecord(m, L, size_w, added, stats["scanned"], stage,
                          time.perf_counter() - t0, inner, converged,
                          None if L_ref is None else rel_obj(L, L_ref), gap)
        trace.append(rec)
        if callback is not None:
            callback(rec)

        if stage == final_stage and empty_rounds >= required_empty:
            if cfg.solve_polish is None or polishing:
                status = "converged"
                break
            polishing = True
            empty_rounds = 0
        if cfg.stop_objective is not None and L <= cfg.stop_objective:
            status = "target"
            break
        if stage == 1:
            delta_history.append(added)
            if cfg.variant is Variant.TWO_STAGE and should_switch(
                delta_history, n, cfg.stage_switch_frac, cfg.stage_switch_rounds
            ):
                stage, exact, tau = 2, True, cfg.tau_stage2
                empty_rounds = 0
                log.info("switching to exact solves at outer iteration %d", m)

    if status != "converged":
        log.info("stopped with status %s after %d outer iterations", status, len(trace))
    t_cert = time.perf_counter()
    scan = scan_columns(p.X, prim.phi, prim.xi)
    model = _model_from_scan(p, prim, scan)
    report = _certify(p, L, prim, scan, tau, t_cert) if cfg.certify else None
    return FitResult(lam, W, prim, model, trace, status, report)
