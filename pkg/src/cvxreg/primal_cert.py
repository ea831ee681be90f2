"""Primal feasibility restoration, duality gaps and max-affine prediction."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch
from .problem import ActiveSet, PrimalPoint, ProblemData, eval_dual, eval_primal, kkt_map

MODEL_VERSION = 1
ARGMIN_ATOL = 1e-10
TILE_ELEMENTS = 1 << 22


def _tile_rows(n: int) -> int:
    return max(1, TILE_ELEMENTS // max(n, 1))


@dataclass
class MaxAffineModel:
    """Convex function ``max_i <x - x_i, xi_i> + phi_i`` anchored at the training points.

    ``phi_tilde`` already includes the offset ``c``; ``c`` is kept for reporting.
    """

    anchors: np.ndarray
    phi_tilde: np.ndarray
    xi_tilde: np.ndarray
    c: float = 0.0
    scaling: dict | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.anchors.shape[0]

    @property
    def d(self) -> int:
        return self.anchors.shape[1]

    @property
    def intercepts(self) -> np.ndarray:
        return self.phi_tilde - np.einsum("ij,ij->i", self.anchors, self.xi_tilde)

    def primal(self) -> PrimalPoint:
        return PrimalPoint(self.phi_tilde, self.xi_tilde)

    def to_dict(self) -> dict:
        out = {
            "version": MODEL_VERSION,
            "n": self.n,
            "d": self.d,
            "c": float(self.c),
            "anchors": self.anchors.ravel().tolist(),
            "phiTilde": self.phi_tilde.tolist(),
            "xiTilde": self.xi_tilde.ravel().tolist(),
        }
        if self.scaling is not None:
            out["scaling"] = self.scaling
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "MaxAffineModel":
        if data.get("version") != MODEL_VERSION:
            raise ValueError(f"unsupported model version {data.get('version')!r}")
        n, d = int(data["n"]), int(data["d"])
        return cls(
            anchors=np.asarray(data["anchors"], dtype=float).reshape(n, d),
            phi_tilde=np.asarray(data["phiTilde"], dtype=float),
            xi_tilde=np.asarray(data["xiTilde"], dtype=float).reshape(n, d),
            c=float(data["c"]),
            scaling=data.get("scaling"),
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "MaxAffineModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class ColumnScan:
    nu: np.ndarray          # min_i v_(i,j) including v_(j,j) = 0
    kappa: np.ndarray       # minimal-norm argmin, smallest index on ties
    min_offdiag: np.ndarray  # min over i != j of v_(i,j)


def scan_columns(X: np.ndarray, phi: np.ndarray, xi: np.ndarray) -> ColumnScan:
    """Stream over every pair in column tiles of bounded memory."""
    n = X.shape[0]
    offset = phi - np.einsum("ij,ij->i", X, xi)
    norms = np.linalg.norm(xi, axis=1)
    nu = np.empty(n)
    kappa = np.empty(n, dtype=np.int64)
    min_off = np.empty(n)
    step = _tile_rows(n)
    for start in range(0, n, step):
        cols = np.arange(start, min(start + step, n))
        rows = np.arange(len(cols))
        # V[b, i] = v_(i, j) for j = cols[b]
        V = phi[cols, None] - X[cols] @ xi.T - offset[None, :]
        V[rows, cols] = np.inf
        min_off[cols] = V.min(axis=1)
        V[rows, cols] = 0.0
        tile_nu = V.min(axis=1)
        nu[cols] = tile_nu
        tied = V <= tile_nu[:, None] + ARGMIN_ATOL
        kappa[cols] = np.argmin(np.where(tied, norms[None, :], np.inf), axis=1)
    return ColumnScan(nu, kappa, min_off)


def feasibilize(p: ProblemData, prim: PrimalPoint) -> MaxAffineModel:
    """Map any primal point to a feasible one built from its hyperplanes."""
    scan = scan_columns(p.X, prim.phi, prim.xi)
    return _model_from_scan(p, prim, scan)


def _model_from_scan(p: ProblemData, prim: PrimalPoint, scan: ColumnScan) -> MaxAffineModel:
    lifted = prim.phi - scan.nu
    c = float(p.y.mean() - lifted.mean())
    return MaxAffineModel(
        anchors=np.array(p.X),
        phi_tilde=lifted + c,
        xi_tilde=prim.xi[scan.kappa].copy(),
        c=c,
    )


def duality_gap(p: ProblemData, W: ActiveSet, lam) -> tuple[float, float, float]:
    """Return ``(L, L_lower, gap)`` for a dual feasible ``lam``."""
    L = eval_dual(p, W, lam)
    model = feasibilize(p, kkt_map(p, W, lam))
    L_lower = -eval_primal(p, model.primal())
    return L, L_lower, L - L_lower


def predict(model: MaxAffineModel, X_new) -> np.ndarray:
    X_new = np.asarray(X_new, dtype=float)
    if X_new.ndim == 1:
        X_new = X_new[:, None] if model.d == 1 else X_new[None, :]
    if X_new.shape[1] != model.d:
        raise DimensionMismatch(f"model has d={model.d}, inputs have {X_new.shape[1]} columns")
    b = model.intercepts
    out = np.empty(X_new.shape[0])
    step = _tile_rows(model.n)
    for start in range(0, X_new.shape[0], step):
        sl = slice(start, start + step)
        out[sl] = (X_new[sl] @ model.xi_tilde.T + b[None, :]).max(axis=1)
    return out


def max_violation(model: MaxAffineModel) -> float:
    """Largest constraint violation of the model's own (phi, xi); <= 0 means feasible."""
    scan = scan_columns(model.anchors, model.phi_tilde, model.xi_tilde)
    return float(max(0.0, -scan.min_offdiag.min()))
