import json
import math

import numpy as np
import pytest

from cvxreg.data_io import (
    Dataset,
    Log,
    Power,
    Schema,
    Winsorize,
    boundary_mask,
    gen_synthetic,
    hull_boundary_scores,
    load_csv,
    normalize,
    rmse,
    save_dataset,
    split,
)
from cvxreg.errors import (
    DegenerateColumn,
    DomainError,
    EmptyAfterFilter,
    LengthMismatch,
    MissingColumn,
    ParseError,
)


# ------------------------------------------------------------ generators


def test_noiseless_sd1_is_squared_norm():
    ds = gen_synthetic("SD1", 50, 3, math.inf, 1, normalize_output=False)
    np.testing.assert_allclose(ds.y, np.sum(ds.X**2, axis=1), rtol=1e-15)
    assert np.all(np.abs(ds.X) <= 1)
    assert ds.provenance["gamma"] == 0.0


def test_sd2_one_dimensional_kink_at_origin():
    ds = gen_synthetic("SD2", 200, 1, math.inf, 4, normalize_output=False)
    s = np.array(ds.provenance["slopes"]).ravel()
    x = ds.X[:, 0]
    np.testing.assert_allclose(ds.y, np.maximum(s[0] * x, s[1] * x))
    assert ds.y[np.argmin(np.abs(x))] == pytest.approx(0.0, abs=0.02)


@pytest.mark.parametrize("kind", ["SD1", "SD2"])
def test_truth_is_convex(kind):
    ds = gen_synthetic(kind, 300, 3, math.inf, 7, normalize_output=False)
    rng = np.random.default_rng(0)
    f = (lambda Z: np.sum(Z**2, axis=1)) if kind == "SD1" else (
        lambda Z: (Z @ np.array(ds.provenance["slopes"]).T).max(axis=1))
    np.testing.assert_allclose(f(ds.X), ds.y)
    a, b = rng.uniform(-1, 1, (500, 3)), rng.uniform(-1, 1, (500, 3))
    assert np.all(f(0.5 * (a + b)) <= 0.5 * (f(a) + f(b)) + 1e-12)


def test_empirical_snr():
    ratios = []
    for seed in range(100):
        ds = gen_synthetic("SD1", 1000, 4, 3.0, seed, normalize_output=False)
        eps = ds.y - ds.truth
        ratios.append(np.sum(ds.truth**2) / np.sum(eps**2))
    assert 2.7 <= np.mean(ratios) <= 3.3


def test_generator_reproducible_and_normalized():
    a = gen_synthetic("SD2", 100, 2, 3.0, 5)
    b = gen_synthetic("SD2", 100, 2, 3.0, 5)
    np.testing.assert_array_equal(a.X, b.X)
    np.testing.assert_array_equal(a.y, b.y)
    np.testing.assert_allclose(a.X.mean(axis=0), 0, atol=1e-15)
    np.testing.assert_allclose(np.linalg.norm(a.X, axis=0), 1)
    assert abs(a.y.mean()) < 1e-15 and np.linalg.norm(a.y) == pytest.approx(1)
    assert "scaling" in a.provenance


# ------------------------------------------------------------ CSV


def _write(tmp_path, text, name="d.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_load_plain(tmp_path):
    path = _write(tmp_path, "a,y,b\n1,2,3\n4,5,6\n7,8,9\n")
    ds = load_csv(path, Schema("y"))
    assert (ds.n, ds.d) == (3, 2)
    np.testing.assert_array_equal(ds.y, [2, 5, 8])
    np.testing.assert_array_equal(ds.X[:, 1], [3, 6, 9])


def test_load_errors(tmp_path):
    with pytest.raises(ParseError) as e:
        load_csv(_write(tmp_path, "a,y\n1,2\n3,x\n"), Schema("y"))
    assert e.value.row == 3 and e.value.col == "y"
    with pytest.raises(MissingColumn):
        load_csv(_write(tmp_path, "a,b\n1,2\n"), Schema("y"))
    with pytest.raises(DomainError) as e:
        load_csv(_write(tmp_path, "a,y\n1,2\n0,3\n"), Schema("y"), [Log("a")])
    assert isinstance(e.value, ParseError) and e.value.row == 3


def test_transforms(tmp_path):
    ds = load_csv(_write(tmp_path, "a,y\n2,1\n1,1\n"), Schema("y"), [Power("a", 1.2)])
    assert ds.X[0, 0] == pytest.approx(1.44)
    ds = load_csv(_write(tmp_path, "a,y\n1,1\n10,2\n"), Schema("y"), [Log("a"), None])
    np.testing.assert_allclose(ds.X[:, 0], [0.0, math.log(10)])


def test_winsorize(tmp_path):
    rows = "\n".join(f"{v},{k}" for k, v in enumerate([0, 0, 0, 0, 0, 0, 0, 0, 0, 100]))
    ds = load_csv(_write(tmp_path, "a,y\n" + rows + "\n"), Schema("y"), [Winsorize("a", 2.0)])
    assert ds.n == 9 and ds.X.max() == 0
    with pytest.raises(EmptyAfterFilter):
        load_csv(_write(tmp_path, "a,y\n1,1\n-1,2\n"), Schema("y"), [Winsorize("a", 0.5)])


def test_snapshot(tmp_path):
    ds = gen_synthetic("SD1", 20, 2, 3.0, 1, normalize_output=False)
    save_dataset(ds, tmp_path / "s.csv")
    back = load_csv(tmp_path / "s.csv", Schema("y"))
    np.testing.assert_array_equal(back.X, ds.X)
    np.testing.assert_array_equal(back.y, ds.y)
    prov = json.loads((tmp_path / "s.json").read_text())
    again = gen_synthetic(prov["generator"], prov["n"], prov["d"], prov["snr"], prov["seed"],
                          normalize_output=False)
    np.testing.assert_array_equal(again.y, ds.y)


# ------------------------------------------------------------ normalize / split


def test_normalize_examples():
    with pytest.raises(DegenerateColumn):
        normalize(Dataset([[1.0], [1.0], [1.0]], [0.0, 1.0, 2.0]))
    ds, rec = normalize(Dataset([[0.0], [2.0]], [1.0, 3.0]))
    np.testing.assert_allclose(ds.X[:, 0], [-1 / math.sqrt(2), 1 / math.sqrt(2)])
    again, _ = normalize(ds)
    np.testing.assert_allclose(again.X, ds.X, atol=1e-12)
    np.testing.assert_allclose(again.y, ds.y, atol=1e-12)


def test_normalize_inverse():
    raw = gen_synthetic("SD1", 50, 3, 3.0, 2, normalize_output=False)
    ds, rec = normalize(raw)
    np.testing.assert_allclose(rec.invert_x(ds.X), raw.X, rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(rec.invert_y(ds.y), raw.y, rtol=1e-12, atol=1e-14)


def test_split():
    ds = Dataset(np.arange(10.0)[:, None], np.arange(10.0))
    tr, te = split(ds, 0.2, 3)
    assert te.n == 2 and tr.n == 8
    assert sorted(tr.y.tolist() + te.y.tolist()) == list(range(10))
    tr2, te2 = split(ds, 0.2, 3)
    np.testing.assert_array_equal(te.y, te2.y)
    assert split(Dataset(np.arange(3.0)[:, None], np.arange(3.0)), 0.5, 0)[1].n == 1
    with pytest.raises(ValueError):
        split(ds, 1.0)


# ------------------------------------------------------------ hull / rmse


def test_hull_distances():
    train = Dataset(np.linspace(0, 1, 11)[:, None], np.zeros(11))
    test = Dataset([[1.5], [0.3], [-0.25]], np.zeros(3))
    s = hull_boundary_scores(train, test, 100)
    np.testing.assert_allclose(s, [0.5, 0.0, 0.25], atol=1e-6)


def test_hull_interior_and_vertex():
    rng = np.random.default_rng(0)
    V = rng.uniform(-1, 1, (40, 3))
    w = rng.dirichlet(np.ones(40), size=20)
    test = Dataset(np.vstack([w @ V, V[:3]]), np.zeros(23))
    s = hull_boundary_scores(Dataset(V, np.zeros(40)), test, 500)
    assert np.all(s[:20] <= 1e-3)
    assert np.all(s[20:] == 0.0)
    mask = boundary_mask(np.arange(100.0), 0.1)
    assert mask.sum() == 10 and mask[-10:].all()


def test_rmse():
    assert rmse([1, 2], [1, 2]) == 0.0
    assert rmse([0, 0], [3, 4]) == pytest.approx(math.sqrt(12.5))
    assert rmse([0, 0], [3, 4], [1]) == 4.0
    with pytest.raises(LengthMismatch):
        rmse([0], [1, 2])
