"""Synthetic generators, CSV ingestion, normalization, splitting and evaluation helpers."""
from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    DegenerateColumn,
    DomainError,
    EmptyAfterFilter,
    LengthMismatch,
    MissingColumn,
    ParseError,
)

BOUNDARY_QUANTILE = 0.1


class Kind(str, enum.Enum):
    SD1 = "SD1"
    SD2 = "SD2"


@dataclass
class ScalingRecord:
    x_center: np.ndarray
    x_norm: np.ndarray
    y_center: float
    y_norm: float

    def apply_x(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.x_center) / self.x_norm

    def apply_y(self, y) -> np.ndarray:
        return (np.asarray(y, dtype=float) - self.y_center) / self.y_norm

    def invert_x(self, X) -> np.ndarray:
        return np.asarray(X, dtype=float) * self.x_norm + self.x_center

    def invert_y(self, y) -> np.ndarray:
        return np.asarray(y, dtype=float) * self.y_norm + self.y_center

    def to_dict(self) -> dict:
        return {
            "xCenter": self.x_center.tolist(),
            "xNorm": self.x_norm.tolist(),
            "yCenter": float(self.y_center),
            "yNorm": float(self.y_norm),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ScalingRecord":
        return cls(
            np.asarray(data["xCenter"], dtype=float),
            np.asarray(data["xNorm"], dtype=float),
            float(data["yCenter"]),
            float(data["yNorm"]),
        )


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    provenance: dict = field(default_factory=dict)
    # Noise-free response on the same scale as y, when known.
    truth: np.ndarray | None = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        if self.X.ndim == 1:
            self.X = self.X[:, None]
        self.y = np.asarray(self.y, dtype=float)
        if self.X.shape[0] != self.y.shape[0]:
            raise LengthMismatch(f"X has {self.X.shape[0]} rows, y has {self.y.shape[0]}")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        truth = None if self.truth is None else self.truth[idx]
        return Dataset(self.X[idx], self.y[idx], dict(self.provenance), truth)


# ---------------------------------------------------------------- synthetic


def _sd_truth(kind: Kind, X: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, dict]:
    if kind is Kind.SD1:
        return np.einsum("ij,ij->i", X, X), {}
    d = X.shape[1]
    slopes = rng.uniform(-1.0, 1.0, size=(2 * d, d))
    return (X @ slopes.T).max(axis=1), {"slopes": slopes.tolist()}


def gen_synthetic(kind, n: int, d: int, snr: float = 3.0, seed: int = 0,
                  normalize_output: bool = True) -> Dataset:
    """SD1 (squared norm) or SD2 (max of 2d random linear pieces) with Gaussian noise.

    Noise is added on the raw scale with ``gamma = ||phi0|| / sqrt(snr * n)``;
    ``snr = inf`` gives noiseless responses.  Features and responses are then
    normalized and the scaling is stored in the provenance.
    """
    kind = Kind(kind)
    if n < 2 or d < 1:
        raise ValueError("need n >= 2 and d >= 1")
    if not snr > 0:
        raise ValueError("snr must be positive")
    rng = np.random.Generator(np.random.Philox(seed))
    X = rng.uniform(-1.0, 1.0, size=(n, d))
    phi0, extra = _sd_truth(kind, X, rng)
    gamma = 0.0 if math.isinf(snr) else float(np.linalg.norm(phi0)) / math.sqrt(snr * n)
    noise = gamma * rng.standard_normal(n)
    y = phi0 + noise
    prov = {"generator": kind.value, "n": n, "d": d, "snr": snr, "seed": seed,
            "gamma": gamma, **extra}
    ds = Dataset(X, y, prov, phi0)
    if normalize_output:
        ds, _ = normalize(ds)
    return ds


# ---------------------------------------------------------------- CSV


@dataclass(frozen=True)
class Schema:
    response: str
    features: Sequence[str] | None = None  # None: every other column


@dataclass(frozen=True)
class Log:
    col: str


@dataclass(frozen=True)
class Winsorize:
    col: str
    score: float


@dataclass(frozen=True)
class Power:
    col: str
    base: float


def _read_table(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError("empty file: header row required", 1, None) from None
        rows = []
        for line_no, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(rec)}", line_no, None)
            vals = []
            for name, cell in zip(header, rec):
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise ParseError(f"non-numeric cell {cell!r}", line_no, name) from None
            rows.append(vals)
    return header, np.array(rows, dtype=float).reshape(len(rows), len(header))


def _apply_transform(t, header, data, lines):
    if t is None:
        return data, lines
    if t.col not in header:
        raise MissingColumn(f"transform refers to unknown column {t.col!r}")
    c = header.index(t.col)
    col = data[:, c]
    if isinstance(t, Log):
        bad = np.flatnonzero(~(col > 0))
        if len(bad):
            raise DomainError(f"log of non-positive value {col[bad[0]]!r}", int(lines[bad[0]]), t.col)
        data = data.copy()
        data[:, c] = np.log(col)
    elif isinstance(t, Power):
        data = data.copy()
        data[:, c] = np.power(t.base, col)
    elif isinstance(t, Winsorize):
        sd = col.std()
        z = np.abs(col - col.mean()) / sd if sd > 0 else np.zeros_like(col)
        keep = z < t.score
        data, lines = data[keep], lines[keep]
    else:
        raise TypeError(f"unknown transform {t!r}")
    return data, lines


def load_csv(path, schema: Schema, transforms: Sequence = ()) -> Dataset:
    """Read a headed numeric CSV and apply ``transforms`` in order.

    Rows are reported by file line number (the header is line 1).
    """
    header, data = _read_table(path)
    names = [schema.response] + list(schema.features or [h for h in header if h != schema.response])
    for name in names:
        if name not in header:
            raise MissingColumn(f"column {name!r} not in header")
    lines = np.arange(2, 2 + data.shape[0])
    for t in transforms:
        data, lines = _apply_transform(t, header, data, lines)
    if data.shape[0] == 0:
        raise EmptyAfterFilter("no rows left after transforms")
    idx = [header.index(nm) for nm in names]
    prov = {
        "source": str(path),
        "response": schema.response,
        "features": names[1:],
        "transforms": [None if t is None else {"type": type(t).__name__, **t.__dict__}
                       for t in transforms],
    }
    return Dataset(data[:, idx[1:]], data[:, idx[0]], prov)


def save_dataset(ds: Dataset, path) -> None:
    """CSV snapshot (features x0..x{d-1}, response y) plus a JSON provenance sidecar."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{k}" for k in range(ds.d)] + ["y"])
        for row, yi in zip(ds.X, ds.y):
            w.writerow([repr(float(v)) for v in row] + [repr(float(yi))])
    with open(path.with_suffix(".json"), "w") as fh:
        json.dump(ds.provenance, fh, indent=2)


# ---------------------------------------------------------------- transforms


def normalize(ds: Dataset) -> tuple[Dataset, ScalingRecord]:
    """Center every column of X and y, then scale each to unit Euclidean norm."""
    xc = ds.X.mean(axis=0)
    Xc = ds.X - xc
    xn = np.linalg.norm(Xc, axis=0)
    yc = float(ds.y.mean())
    ycen = ds.y - yc
    yn = float(np.linalg.norm(ycen))
    bad = np.flatnonzero(xn <= 1e-300 * max(1.0, float(np.abs(ds.X).max(initial=0.0))))
    if len(bad):
        raise DegenerateColumn(f"feature column {int(bad[0])} is constant")
    if yn == 0.0:
        raise DegenerateColumn("response is constant")
    rec = ScalingRecord(xc, xn, yc, yn)
    truth = None if ds.truth is None else rec.apply_y(ds.truth)
    prov = {**ds.provenance, "scaling": rec.to_dict()}
    return Dataset(Xc / xn, ycen / yn, prov, truth), rec


def split(ds: Dataset, test_frac: float, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Seeded partition; the test part has ``floor(test_frac * n)`` rows."""
    if not 0 < test_frac < 1:
        raise ValueError("test_frac must lie in (0, 1)")
    rng = np.random.Generator(np.random.Philox(seed))
    perm = rng.permutation(ds.n)
    n_test = int(math.floor(test_frac * ds.n))
    test_idx = np.sort(perm[:n_test])
    train_idx = np.sort(perm[n_test:])
    return ds.subset(train_idx), ds.subset(test_idx)


# ---------------------------------------------------------------- evaluation


def hull_boundary_scores(train: Dataset, test: Dataset, fw_iters: int = 200) -> np.ndarray:
    """Approximate distance of each test point to the convex hull of the training inputs.

    Frank-Wolfe on ``min_{z in hull} ||z - x||^2`` from the nearest training
    point, with exact line search.
    """
    if fw_iters < 1:
        raise ValueError("fw_iters must be at least 1")
    V = train.X
    Xt = test.X
    out = np.empty(Xt.shape[0])
    sq = np.einsum("ij,ij->i", V, V)
    step = max(1, (1 << 20) // max(V.shape[0], 1))
    for start in range(0, Xt.shape[0], step):
        x = Xt[start:start + step]
        D = sq[None, :] - 2.0 * x @ V.T
        z = V[np.argmin(D, axis=1)].copy()
        for _ in range(fw_iters):
            g = z - x
            s = V[np.argmin(g @ V.T, axis=1)]
            dz = s - z
            den = np.einsum("ij,ij->i", dz, dz)
            num = -np.einsum("ij,ij->i", g, dz)
            gam = np.where(den > 0, np.clip(num / np.where(den > 0, den, 1.0), 0.0, 1.0), 0.0)
            if not np.any(gam > 0):
                break
            z += gam[:, None] * dz
        out[start:start + step] = np.linalg.norm(z - x, axis=1)
    return out


def boundary_mask(scores: np.ndarray, q: float = BOUNDARY_QUANTILE) -> np.ndarray:
    """Points whose hull distance lies in the top ``q`` fraction."""
    if len(scores) == 0:
        return np.zeros(0, dtype=bool)
    return scores >= np.quantile(scores, 1.0 - q)


def rmse(pred, truth, subset=None) -> float:
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.shape != truth.shape:
        raise LengthMismatch(f"pred has shape {pred.shape}, truth has {truth.shape}")
    if subset is not None:
        pred, truth = pred[subset], truth[subset]
    return float(np.sqrt(np.mean((pred - truth) ** 2)))
