"""Brute-force reference solvers for small instances.

Nothing here reuses the streaming operators of :mod:`cvxreg.problem`; the
constraint rows are written out explicitly from

    phi_j - phi_i - <x_j - x_i, xi_i> >= 0,

with ``xi`` flattened block-wise (``xi_i`` occupies columns ``i*d .. i*d+d-1``).
These routines exist to produce ground truth for tests and are not a
fallback for the production path.
"""
from __future__ import annotations

import math

import numpy as np
import scipy.sparse as sp

from .errors import InstanceTooLarge
from .problem import ProblemData

FULL_DUAL_MAX_N = 200
DENSE_EIG_MAX_N = 50


def constraint_matrices(p: ProblemData):
    """Explicit ``A`` (N x n) and ``B`` (N x nd) with rows in row-major pair order."""
    n, d = p.n, p.d
    rows_a, cols_a, vals_a = [], [], []
    rows_b, cols_b, vals_b = [], [], []
    pairs = []
    r = 0
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            pairs.append((i, j))
            rows_a += [r, r]
            cols_a += [j, i]
            vals_a += [1.0, -1.0]
            for c in range(d):
                rows_b.append(r)
                cols_b.append(i * d + c)
                vals_b.append(-(p.X[j, c] - p.X[i, c]))
            r += 1
    A = sp.csr_matrix((vals_a, (rows_a, cols_a)), shape=(r, n))
    B = sp.csr_matrix((vals_b, (rows_b, cols_b)), shape=(r, n * d))
    return A, B, np.array(pairs, dtype=np.int64)


def _lipschitz(A, B, rho, iters=200):
    v = np.ones(A.shape[0]) + np.arange(A.shape[0]) / A.shape[0]
    est = 0.0
    for _ in range(iters):
        w = A @ (A.T @ v) + (B @ (B.T @ v)) / rho
        est = float(v @ w) / float(v @ v)
        v = w / np.linalg.norm(w)
    return est


def full_dual_solve(p: ProblemData, iters: int = 200_000, tol: float = 1e-11):
    """Accelerated projected gradient with function restarts on the full dual.

    Stops early once the natural residual ``|max(lam, grad)|`` drops below
    ``tol * (1 + |L|)``.  Returns ``(lam_star, L_star)`` with ``lam_star``
    in row-major pair order.
    """
    if p.n > FULL_DUAL_MAX_N:
        raise InstanceTooLarge(f"oracle limited to n <= {FULL_DUAL_MAX_N}, got {p.n}")
    A, B, _ = constraint_matrices(p)
    rho, y = p.rho, p.y
    Ay = A @ y

    def objective(lam):
        a = A.T @ lam
        b = B.T @ lam
        return 0.5 * a @ a + 0.5 / rho * b @ b - y @ a

    def gradient(lam):
        return A @ (A.T @ lam) + (B @ (B.T @ lam)) / rho - Ay

    step = 1.0 / (1.05 * _lipschitz(A, B, rho))
    x = np.zeros(A.shape[0])
    Lx = 0.0
    z = x.copy()
    t = 1.0
    for k in range(int(iters)):
        gz = gradient(z)
        x_new = np.minimum(0.0, z - step * gz)
        L_new = objective(x_new)
        # Near the optimum the objective is flat to rounding; only a real
        # increase triggers a restart, otherwise the iterate would freeze.
        if L_new > Lx + 1e-15 * (1 + abs(Lx)):
            z = x.copy()
            t = 1.0
            continue
        t_new = 0.5 * (1 + math.sqrt(1 + 4 * t * t))
        z = x_new + ((t - 1) / t_new) * (x_new - x)
        x, Lx, t = x_new, L_new, t_new
        if k % 20 == 0:
            g = gradient(x)
            if np.abs(np.maximum(x, g)).max() <= tol * (1 + abs(Lx)):
                break
    return x, float(objective(x))


def primal_qp_solve(p: ProblemData):
    """Solve the primal QP with an interior-point method (cvxopt).

    Returns ``(phi, xi, f_star)``.  Used to cross-check :func:`full_dual_solve`
    through an independent route.
    """
    import cvxopt
    from cvxopt import solvers

    if p.n > FULL_DUAL_MAX_N:
        raise InstanceTooLarge(f"oracle limited to n <= {FULL_DUAL_MAX_N}, got {p.n}")
    n, d = p.n, p.d
    A, B, _ = constraint_matrices(p)
    C = sp.hstack([A, B]).tocoo()
    P = cvxopt.spdiag([1.0] * n + [p.rho] * (n * d))
    q = cvxopt.matrix(np.concatenate([-p.y, np.zeros(n * d)]))
    G = cvxopt.spmatrix((-C.data).tolist(), C.row.tolist(), C.col.tolist(), C.shape)
    h = cvxopt.matrix(np.zeros(C.shape[0]))
    opts = {"show_progress": False, "abstol": 1e-12, "reltol": 1e-12, "feastol": 1e-12,
            "maxiters": 200}
    sol = solvers.qp(P, q, G, h, options=opts)
    z = np.array(sol["x"]).ravel()
    phi, xi = z[:n], z[n:].reshape(n, d)
    f = 0.5 * float((p.y - phi) @ (p.y - phi)) + 0.5 * p.rho * float(np.sum(xi * xi))
    return phi, xi, f


def dense_eigmax(p: ProblemData, iters: int = 1000) -> float:
    """Largest eigenvalue of the dense ``A A^T + (1/rho) B B^T`` by power iteration."""
    if p.n > DENSE_EIG_MAX_N:
        raise InstanceTooLarge(f"dense eigen oracle limited to n <= {DENSE_EIG_MAX_N}, got {p.n}")
    A, B, _ = constraint_matrices(p)
    Ad, Bd = A.toarray(), B.toarray()
    Q = Ad @ Ad.T + (Bd @ Bd.T) / p.rho
    v = np.cos(np.arange(Q.shape[0]) + 1.0) + 2.0
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = Q @ v
        lam = float(v @ w)
        v = w / np.linalg.norm(w)
    return lam
