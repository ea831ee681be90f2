import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cvxreg.errors import DimensionMismatch
from cvxreg.oracle import primal_qp_solve
from cvxreg.primal_cert import (
    MaxAffineModel,
    duality_gap,
    feasibilize,
    max_violation,
    predict,
    scan_columns,
)
from cvxreg.problem import ActiveSet, PrimalPoint, all_pairs, build_problem, eval_primal, violations

from conftest import random_problem, sd1_problem


def _feasibility_bound(model):
    return 1e-9 * (1 + np.max(np.abs(model.phi_tilde)))


def test_hand_example(tiny):
    m = feasibilize(tiny, PrimalPoint(np.zeros(2), np.ones((2, 1))))
    scan = scan_columns(tiny.X, np.zeros(2), np.ones((2, 1)))
    np.testing.assert_array_equal(scan.nu, [0.0, -1.0])
    np.testing.assert_array_equal(scan.kappa, [0, 0])
    np.testing.assert_array_equal(m.xi_tilde, [[1.0], [1.0]])
    np.testing.assert_array_equal(m.phi_tilde, [0.0, 1.0])
    assert m.c == 0.0
    np.testing.assert_array_equal(violations(tiny, m.primal(), [(0, 1), (1, 0)]), [0.0, 0.0])


def test_constant_model_from_y(tiny):
    m = feasibilize(tiny, PrimalPoint(tiny.y.copy(), np.zeros((2, 1))))
    np.testing.assert_allclose(m.phi_tilde, [0.5, 0.5])
    np.testing.assert_array_equal(m.xi_tilde, np.zeros((2, 1)))
    np.testing.assert_allclose(predict(m, [[-3.0], [0.25], [9.0]]), 0.5)


def test_gap_at_zero(tiny):
    L, Lbar, gap = duality_gap(tiny, ActiveSet.full(2), np.zeros(2))
    assert (L, Lbar, gap) == (0.0, -0.25, 0.25)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(2, 60), d=st.integers(1, 4), seed=st.integers(0, 100_000),
       scale=st.sampled_from([1e-3, 1.0, 1e3]))
def test_feasible_and_mean_matched(n, d, seed, scale):
    p = random_problem(n, d, 1.0, seed)
    rng = np.random.default_rng(seed + 1)
    prim = PrimalPoint(scale * rng.standard_normal(n), scale * rng.standard_normal((n, d)))
    m = feasibilize(p, prim)
    assert max_violation(m) <= _feasibility_bound(m)
    assert abs(m.phi_tilde.mean() - p.y.mean()) <= 1e-10 * max(1.0, abs(p.y.mean()), scale)


def test_fixed_point_at_oracle_optimum():
    p = sd1_problem(25, 2, 1e-2, 7)
    phi, xi, f = primal_qp_solve(p)
    m = feasibilize(p, PrimalPoint(phi, xi))
    disp = np.linalg.norm(m.phi_tilde - phi) + np.linalg.norm(m.xi_tilde - xi)
    assert disp <= 1e-8


def test_predict_interpolates_and_is_convex():
    p = random_problem(30, 3, 1.0, 2)
    rng = np.random.default_rng(2)
    m = feasibilize(p, PrimalPoint(rng.standard_normal(30), rng.standard_normal((30, 3))))
    np.testing.assert_allclose(predict(m, p.X), m.phi_tilde, atol=1e-12)
    a, b = rng.uniform(-2, 2, (200, 3)), rng.uniform(-2, 2, (200, 3))
    mid = predict(m, 0.5 * (a + b))
    assert np.all(mid <= 0.5 * (predict(m, a) + predict(m, b)) + 1e-12)
    with pytest.raises(DimensionMismatch):
        predict(m, np.zeros((2, 2)))


def test_scan_tiles_match_dense(monkeypatch):
    import cvxreg.primal_cert as pc

    p = random_problem(37, 2, 1.0, 9)
    rng = np.random.default_rng(9)
    phi, xi = rng.standard_normal(37), rng.standard_normal((37, 2))
    full = scan_columns(p.X, phi, xi)
    monkeypatch.setattr(pc, "TILE_ELEMENTS", 37 * 4)
    tiled = scan_columns(p.X, phi, xi)
    np.testing.assert_array_equal(full.nu, tiled.nu)
    np.testing.assert_array_equal(full.kappa, tiled.kappa)
    i, j = all_pairs(37)
    V = np.zeros((37, 37))
    V[i, j] = violations(p, PrimalPoint(phi, xi), np.column_stack([i, j]))
    np.testing.assert_allclose(full.nu, V.min(axis=0), atol=1e-14)


def test_kappa_prefers_smaller_norm_on_ties():
    # Both hyperplanes pass through (x_1, phi_1); the flatter one wins.
    p = build_problem([[0.0], [1.0], [2.0]], [0.0, 0.0, 0.0], 1.0)
    phi = np.array([0.0, 1.0, 3.0])
    xi = np.array([[1.0], [2.0], [3.0]])
    scan = scan_columns(p.X, phi, xi)
    assert scan.kappa[1] == 0


def test_model_roundtrip(tmp_path):
    p = random_problem(6, 2, 1.0, 3)
    m = feasibilize(p, PrimalPoint(p.y.copy(), np.zeros((6, 2))))
    m.scaling = {"yNorm": 2.0}
    m.save(tmp_path / "m.json")
    back = MaxAffineModel.load(tmp_path / "m.json")
    np.testing.assert_array_equal(back.anchors, m.anchors)
    np.testing.assert_array_equal(back.phi_tilde, m.phi_tilde)
    np.testing.assert_array_equal(back.xi_tilde, m.xi_tilde)
    assert back.scaling == {"yNorm": 2.0}
    bad = json.loads((tmp_path / "m.json").read_text())
    bad["version"] = 99
    with pytest.raises(ValueError):
        MaxAffineModel.from_dict(bad)


def test_weak_duality_random_lambda():
    p = random_problem(15, 2, 0.1, 4)
    W = ActiveSet.full(15)
    rng = np.random.default_rng(4)
    for _ in range(10):
        lam = -rng.random(len(W)) * rng.random()
        L, Lbar, gap = duality_gap(p, W, lam)
        assert gap >= -1e-9
