"""Problem data, active sets and the matrix-free operators of the convex regression QP.

The primal problem is

    minimize   0.5 * ||y - phi||^2 + 0.5 * rho * ||xi||^2
    subject to phi_j - phi_i - <x_j - x_i, xi_i> >= 0   for all i != j

and its dual lives on the nonpositive orthant indexed by ordered pairs (i, j).
Row (i, j) of ``A`` carries +1 at ``j`` and -1 at ``i``; row (i, j) of ``B``
carries ``-(x_j - x_i)`` in block ``i``.  Only the nonzeros over the active
pairs are stored (as one sparse operator ``[A_W | B_W]``, grown with the set);
nothing of size ``n^2`` is ever materialized.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import (
    DimensionMismatch,
    EmptyActiveSet,
    IndexOutOfRange,
    NonFiniteInput,
    NonPositiveRho,
    PositiveLambda,
)

SIGMA_SAFEGUARD = 1.01
SIGMA_ITERS = 50


@dataclass(frozen=True)
class ProblemData:
    X: np.ndarray
    y: np.ndarray
    rho: float

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def n_pairs(self) -> int:
        return self.n * (self.n - 1)


def build_problem(X, y, rho) -> ProblemData:
    """Validate inputs and return a read-only :class:`ProblemData`."""
    X = np.array(X, dtype=float)
    y = np.array(y, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise DimensionMismatch(f"X has shape {X.shape}, y has shape {y.shape}")
    if X.shape[0] < 2 or X.shape[1] < 1:
        raise DimensionMismatch(f"need n >= 2 and d >= 1, got X of shape {X.shape}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise NonFiniteInput("X and y must be finite")
    rho = float(rho)
    if not np.isfinite(rho):
        raise NonFiniteInput("rho must be finite")
    if rho <= 0:
        raise NonPositiveRho(f"rho must be positive, got {rho}")
    X.setflags(write=False)
    y.setflags(write=False)
    return ProblemData(X, y, rho)


class ActiveSet:
    """Insertion-ordered set of pairs with per-row and per-column slices.

    Pairs are 0-based.  Appending never reorders existing pairs, so a
    multiplier vector stays aligned when the set grows.
    """

    def __init__(self, n: int, pairs=None):
        self.n = int(n)
        self._i = np.empty(64, dtype=np.int64)
        self._j = np.empty(64, dtype=np.int64)
        self._size = 0
        self._keys: set[int] = set()
        self._rows: dict[int, set[int]] = {}
        self._cols: dict[int, set[int]] = {}
        self.row_count = np.zeros(self.n, dtype=np.int64)
        self.col_count = np.zeros(self.n, dtype=np.int64)
        self._diff_src = None
        self._diff = np.empty((0, 0))
        self._op = None
        if pairs is not None:
            pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
            self.extend(pairs[:, 0], pairs[:, 1])

    def __len__(self) -> int:
        return self._size

    def __contains__(self, pair) -> bool:
        i, j = pair
        return int(i) * self.n + int(j) in self._keys

    def __iter__(self):
        return zip(self.i.tolist(), self.j.tolist())

    @property
    def i(self) -> np.ndarray:
        return self._i[: self._size]

    @property
    def j(self) -> np.ndarray:
        return self._j[: self._size]

    @property
    def pairs(self) -> np.ndarray:
        return np.column_stack([self.i, self.j])

    def row(self, i: int) -> set[int]:
        """Column indices ``j`` with ``(i, j)`` in the set."""
        return self._rows.get(int(i), set())

    def col(self, j: int) -> set[int]:
        """Row indices ``i`` with ``(i, j)`` in the set."""
        return self._cols.get(int(j), set())

    def contains_keys(self, keys: np.ndarray) -> np.ndarray:
        """Vectorized membership for flat keys ``i * n + j``."""
        ks = self._keys
        return np.fromiter((k in ks for k in keys.tolist()), dtype=bool, count=len(keys))

    def extend(self, i, j) -> int:
        """Append new pairs, skipping members and duplicates.  Returns count added."""
        i = np.asarray(i, dtype=np.int64).ravel()
        j = np.asarray(j, dtype=np.int64).ravel()
        if i.shape != j.shape:
            raise DimensionMismatch("row and column index arrays differ in length")
        if len(i) == 0:
            return 0
        if i.min() < 0 or j.min() < 0 or i.max() >= self.n or j.max() >= self.n:
            raise IndexOutOfRange(f"pair index outside [0, {self.n})")
        if np.any(i == j):
            raise IndexOutOfRange("diagonal pairs (i, i) are not constraints")
        keep_i, keep_j = [], []
        for a, b in zip(i.tolist(), j.tolist()):
            key = a * self.n + b
            if key in self._keys:
                continue
            self._keys.add(key)
            self._rows.setdefault(a, set()).add(b)
            self._cols.setdefault(b, set()).add(a)
            keep_i.append(a)
            keep_j.append(b)
        added = len(keep_i)
        if added == 0:
            return 0
        need = self._size + added
        if need > len(self._i):
            cap = max(need, 2 * len(self._i))
            self._i = np.resize(self._i, cap)
            self._j = np.resize(self._j, cap)
        self._i[self._size:need] = keep_i
        self._j[self._size:need] = keep_j
        np.add.at(self.row_count, keep_i, 1)
        np.add.at(self.col_count, keep_j, 1)
        self._size = need
        return added

    def copy(self) -> "ActiveSet":
        return ActiveSet(self.n, self.pairs)

    def differences(self, X: np.ndarray) -> np.ndarray:
        """Rows ``x_j - x_i`` for every pair, cached and extended incrementally."""
        if self._diff_src is not X or self._diff.shape[1] != X.shape[1]:
            self._diff_src = X
            self._diff = np.empty((0, X.shape[1]))
        have = self._diff.shape[0]
        if have < self._size:
            tail = X[self._j[have:self._size]] - X[self._i[have:self._size]]
            self._diff = np.concatenate([self._diff, tail]) if have else tail
        return self._diff[: self._size]

    def operator(self, X: np.ndarray):
        """Sparse ``M = [A_W | B_W]`` (pairs x n(1+d)) and its CSR transpose, cached.

        ``B_W`` columns are the block-flattened ``xi`` (``xi_i`` at ``n + i*d``).
        Every row has exactly ``2 + d`` entries, so CSR arrays are written
        directly without sorting.
        """
        D = self.differences(X)
        if self._op is not None and self._op[0] == self._size:
            return self._op[1], self._op[2]
        n, d, m = self.n, X.shape[1], self._size
        k = 2 + d
        i, j = self.i, self.j
        ind = np.empty((m, k), dtype=np.int64)
        ind[:, 0] = j
        ind[:, 1] = i
        ind[:, 2:] = n + i[:, None] * d + np.arange(d)
        val = np.empty((m, k))
        val[:, 0] = 1.0
        val[:, 1] = -1.0
        val[:, 2:] = -D
        M = sp.csr_matrix((val.ravel(), ind.ravel(), np.arange(0, k * m + 1, k)),
                          shape=(m, n * (1 + d)))
        MT = M.T.tocsr()
        self._op = (m, M, MT)
        return M, MT

    @classmethod
    def full(cls, n: int) -> "ActiveSet":
        """Every ordered pair, row-major."""
        i, j = all_pairs(n)
        return cls(n, np.column_stack([i, j]))


def all_pairs(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Row-major enumeration of the off-diagonal pairs (index ``w = i*(n-1) + r``)."""
    i = np.repeat(np.arange(n, dtype=np.int64), n - 1)
    r = np.tile(np.arange(n - 1, dtype=np.int64), n)
    return i, r + (r >= i)


def pair_from_flat(w, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of the row-major enumeration used by :func:`all_pairs`."""
    w = np.asarray(w, dtype=np.int64)
    i = w // (n - 1)
    r = w - i * (n - 1)
    return i, r + (r >= i)


@dataclass
class PrimalPoint:
    phi: np.ndarray
    xi: np.ndarray


@dataclass
class DualIterate:
    lam: np.ndarray
    cached_primal: PrimalPoint | None = field(default=None)


def _check_lambda(W: ActiveSet, lam) -> np.ndarray:
    lam = np.asarray(lam, dtype=float)
    if lam.shape != (len(W),):
        raise DimensionMismatch(f"lambda has shape {lam.shape}, active set has {len(W)} pairs")
    if np.any(lam > 0):
        raise PositiveLambda("dual multipliers must be nonpositive")
    return lam


def adjoint(p: ProblemData, W: ActiveSet, lam: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(A_W^T lam, B_W^T lam)`` as an n-vector and an n-by-d array."""
    n, d = p.n, p.d
    if len(W) == 0:
        return np.zeros(n), np.zeros((n, d))
    u = W.operator(p.X)[1] @ lam
    return u[:n], u[n:].reshape(n, d)


def forward(p: ProblemData, W: ActiveSet, u: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Return ``A_W u + B_W w`` for ``u`` in R^n and ``w`` in R^{n x d}."""
    if len(W) == 0:
        return np.empty(0)
    return W.operator(p.X)[0] @ np.concatenate([u, np.asarray(w, dtype=float).ravel()])


def kkt_map(p: ProblemData, W: ActiveSet, lam) -> PrimalPoint:
    """Primal point ``(y - A_W^T lam, -(1/rho) B_W^T lam)`` attached to a dual iterate."""
    lam = _check_lambda(W, lam)
    a, b = adjoint(p, W, lam)
    return PrimalPoint(p.y - a, -b / p.rho)


def violations(p: ProblemData, prim: PrimalPoint, pairs) -> np.ndarray:
    """Constraint slacks ``phi_j - phi_i - <x_j - x_i, xi_i>``; negative means violated."""
    if isinstance(pairs, ActiveSet):
        i, j = pairs.i, pairs.j
    else:
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        i, j = pairs[:, 0], pairs[:, 1]
    if len(i) == 0:
        return np.empty(0)
    if i.min() < 0 or j.min() < 0 or i.max() >= p.n or j.max() >= p.n:
        raise IndexOutOfRange(f"pair index outside [0, {p.n})")
    if np.any(i == j):
        raise IndexOutOfRange("diagonal pairs (i, i) are not constraints")
    return _slack(p.X, prim.phi, prim.xi, i, j)


def _slack(X, phi, xi, i, j, D=None):
    if D is None:
        D = X[j] - X[i]
    return phi[j] - phi[i] - np.einsum("ij,ij->i", D, xi[i])


def eval_primal(p: ProblemData, prim: PrimalPoint) -> float:
    r = p.y - prim.phi
    return 0.5 * float(r @ r) + 0.5 * p.rho * float(np.sum(prim.xi * prim.xi))


def eval_dual(p: ProblemData, W: ActiveSet, lam) -> float:
    lam = np.asarray(lam, dtype=float)
    if lam.shape != (len(W),):
        raise DimensionMismatch(f"lambda has shape {lam.shape}, active set has {len(W)} pairs")
    a, b = adjoint(p, W, lam)
    return _dual_value(p, a, b)


def _dual_value(p, a, b) -> float:
    return 0.5 * float(a @ a) + 0.5 / p.rho * float(np.sum(b * b)) - float(p.y @ a)


def reduced_gradient(p: ProblemData, W: ActiveSet, lam) -> np.ndarray:
    """Gradient of the reduced dual; equals minus the slacks of the KKT image on ``W``."""
    return dual_state(p, W, lam)[1]


def dual_state(p: ProblemData, W: ActiveSet, lam) -> tuple[float, np.ndarray, PrimalPoint]:
    """Objective, gradient and KKT image in one pass over the pairs."""
    lam = _check_lambda(W, lam)
    a, b = adjoint(p, W, lam)
    prim = PrimalPoint(p.y - a, -b / p.rho)
    if len(W):
        grad = -_slack(p.X, prim.phi, prim.xi, W.i, W.j, W.differences(p.X))
    else:
        grad = np.empty(0)
    return _dual_value(p, a, b), grad, prim


def _default_start(m: int) -> np.ndarray:
    # The all-ones vector can be an eigenvector of a small eigenvalue
    # (e.g. n = 2), so the default start is a fixed pseudo-random vector.
    rng = np.random.Generator(np.random.Philox(0x5EED))
    return 1.0 + rng.random(m)


def apply_hessian(p: ProblemData, W: ActiveSet, lam: np.ndarray) -> np.ndarray:
    """``(A_W A_W^T + (1/rho) B_W B_W^T) lam``."""
    a, b = adjoint(p, W, lam)
    return forward(p, W, a, b / p.rho)


def estimate_sigma(
    p: ProblemData,
    W: ActiveSet,
    warm_start: np.ndarray | None = None,
    iters: int = SIGMA_ITERS,
    safeguard: float = SIGMA_SAFEGUARD,
    return_vector: bool = False,
):
    """Power-method estimate of the smoothness constant of the reduced dual.

    Parameters
    ----------
    warm_start : array, optional
        Previous eigenvector estimate.  Shorter vectors (from a smaller active
        set) are padded with the default start, scaled to match.
    iters : int
        Number of power iterations.
    safeguard : float
        Multiplier applied to the final Rayleigh quotient.
    return_vector : bool
        Also return the final unit vector, for warm starting later calls.
    """
    m = len(W)
    if m == 0:
        raise EmptyActiveSet("cannot estimate smoothness on an empty active set")
    v = _default_start(m)
    if warm_start is not None and len(warm_start):
        k = min(len(warm_start), m)
        ws = np.asarray(warm_start[:k], dtype=float)
        if np.linalg.norm(ws) > 0:
            v *= 1e-2 / np.sqrt(m)
            v[:k] += ws / np.linalg.norm(ws)
    v /= np.linalg.norm(v)
    rq = 0.0
    for _ in range(max(int(iters), 1)):
        qv = apply_hessian(p, W, v)
        rq = float(v @ qv)
        nrm = np.linalg.norm(qv)
        if nrm == 0.0:
            break
        v = qv / nrm
    est = safeguard * rq
    return (est, v) if return_vector else est
