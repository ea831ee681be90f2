"""Projected and accelerated projected gradient solvers for the reduced dual."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NonFiniteGradient, NonFiniteObjective
from .problem import (
    ActiveSet,
    ProblemData,
    _check_lambda,
    _dual_value,
    adjoint,
    estimate_sigma,
    forward,
)

ASCENT_SLACK = 1e-13


class SolveKind(str, enum.Enum):
    INEXACT = "inexact"
    EXACT = "exact"


class Method(str, enum.Enum):
    PGD = "pgd"
    APG_RESTART = "apg-restart"


@dataclass
class SolveMode:
    kind: SolveKind = SolveKind.INEXACT
    max_iters: int = 5
    rel_obj_tol: float = 1e-6
    method: Method = Method.PGD
    kkt_tol: float = 1e-7
    backtrack: bool = False

    def __post_init__(self):
        self.kind = SolveKind(self.kind)
        self.method = Method(self.method)
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.rel_obj_tol < 0 or self.kkt_tol < 0:
            raise ValueError("tolerances must be nonnegative")

    @classmethod
    def inexact(cls, **kw) -> "SolveMode":
        kw.setdefault("method", Method.PGD)
        return cls(SolveKind.INEXACT, **{"max_iters": 5, "rel_obj_tol": 1e-6, **kw})

    @classmethod
    def exact(cls, **kw) -> "SolveMode":
        kw.setdefault("method", Method.APG_RESTART)
        return cls(SolveKind.EXACT, **{"max_iters": 3000, "kkt_tol": 1e-7, **kw})


@dataclass
class SolveReport:
    iters_used: int
    initial_objective: float
    final_objective: float
    first_step_decrease: float
    converged: bool
    sigma: float
    kkt_residual: float
    restarts: int = 0
    history: list[float] = field(default_factory=list)


class _State:
    """Dual iterate with its operator images, objective and gradient."""

    __slots__ = ("lam", "a", "b", "L", "g")

    def __init__(self, lam, a, b, L, g):
        self.lam, self.a, self.b, self.L, self.g = lam, a, b, L, g

    def extrapolate(self, prev: "_State", beta: float) -> "_State":
        # Everything but L is affine in lambda.
        lam = self.lam + beta * (self.lam - prev.lam)
        a = self.a + beta * (self.a - prev.a)
        b = self.b + beta * (self.b - prev.b)
        g = self.g + beta * (self.g - prev.g)
        return _State(lam, a, b, None, g)


def _evaluate(p: ProblemData, W: ActiveSet, lam: np.ndarray) -> _State:
    a, b = adjoint(p, W, lam)
    L = _dual_value(p, a, b)
    if not math.isfinite(L):
        raise NonFiniteObjective("reduced dual objective is not finite")
    if len(W):
        g = -forward(p, W, p.y - a, -b / p.rho)
    else:
        g = np.empty(0)
    return _State(lam, a, b, L, g)


def _objective_from_images(p: ProblemData, s: _State) -> float:
    return _dual_value(p, s.a, s.b)


def kkt_residual(lam: np.ndarray, grad: np.ndarray) -> float:
    """Largest of the natural residual ``|max(lam, grad)|`` and ``|lam * grad|``."""
    if len(lam) == 0:
        return 0.0
    nat = np.abs(np.maximum(lam, grad)).max()
    comp = np.abs(lam * grad).max()
    return float(max(nat, comp))


def pgd_step(p: ProblemData, W: ActiveSet, lam, sigma_hat: float) -> np.ndarray:
    """One projected gradient step ``min(0, lam - grad / sigma_hat)``."""
    lam = _check_lambda(W, lam)
    s = _evaluate(p, W, lam)
    if not np.all(np.isfinite(s.g)):
        raise NonFiniteGradient("reduced gradient is not finite")
    return np.minimum(0.0, lam - s.g / sigma_hat)


def solve_reduced(
    p: ProblemData,
    W: ActiveSet,
    lam0,
    mode: SolveMode,
    sigma: float | None = None,
    record_history: bool = False,
) -> tuple[np.ndarray, SolveReport]:
    """Decrease the reduced dual from ``lam0`` according to ``mode``.

    Every accepted iterate is a descent step.  With ``APG_RESTART`` the first
    update is a plain projected gradient step and momentum is reset whenever
    the objective would increase.  If a plain step ever ascends, the step size
    estimate was too optimistic and ``sigma`` is doubled.
    """
    lam0 = _check_lambda(W, lam0).copy()
    x = _evaluate(p, W, lam0)
    L_init = x.L
    history = [x.L] if record_history else []
    if len(W) == 0:
        return lam0, SolveReport(0, L_init, L_init, 0.0, True, 0.0, 0.0, 0, history)
    if sigma is None:
        sigma = estimate_sigma(p, W)
    sigma = float(sigma)
    exact = mode.kind is SolveKind.EXACT
    scale = 1.0 + abs(x.L)
    if exact and kkt_residual(x.lam, x.g) <= mode.kkt_tol * scale:
        return x.lam, SolveReport(0, L_init, x.L, 0.0, True, sigma,
                                  kkt_residual(x.lam, x.g), 0, history)

    accelerate = mode.method is Method.APG_RESTART
    prev = x
    t = 1.0
    beta = 0.0
    iters = 0
    restarts = 0
    first_decrease = None
    converged = False
    while iters < mode.max_iters:
        y = x.extrapolate(prev, beta) if beta > 0 else x
        if not np.all(np.isfinite(y.g)):
            raise NonFiniteGradient("reduced gradient is not finite")
        cand_lam = np.minimum(0.0, y.lam - y.g / sigma)
        cand = _evaluate(p, W, cand_lam)
        iters += 1
        if mode.backtrack:
            Ly = x.L if y is x else _objective_from_images(p, y)
            step = cand_lam - y.lam
            bound = Ly + float(y.g @ step) + 0.5 * sigma * float(step @ step)
            if cand.L > bound + ASCENT_SLACK * max(1.0, abs(Ly)):
                sigma *= 2.0
                continue
        if cand.L > x.L + ASCENT_SLACK * max(1.0, abs(x.L)):
            if y is x:
                sigma *= 2.0
            else:
                restarts += 1
            beta, t, prev = 0.0, 1.0, x
            continue
        decrease = x.L - cand.L
        if first_decrease is None:
            first_decrease = max(decrease, 0.0)
        if accelerate:
            t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
            beta = (t - 1.0) / t_next
            t = t_next
        prev, x = x, cand
        if record_history:
            history.append(x.L)
        if exact:
            if kkt_residual(x.lam, x.g) <= mode.kkt_tol * (1.0 + abs(x.L)):
                converged = True
                break
        elif abs(decrease) <= mode.rel_obj_tol * max(abs(prev.L), 1e-300):
            converged = True
            break
    return x.lam, SolveReport(
        iters_used=iters,
        initial_objective=L_init,
        final_objective=x.L,
        first_step_decrease=first_decrease or 0.0,
        converged=converged,
        sigma=sigma,
        kkt_residual=kkt_residual(x.lam, x.g),
        restarts=restarts,
        history=history,
    )
