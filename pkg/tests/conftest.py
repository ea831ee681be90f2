import json
from pathlib import Path

import numpy as np
import pytest

from cvxreg.data_io import gen_synthetic
from cvxreg.problem import build_problem

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def oracle_values():
    return json.loads((DATA / "oracle_values.json").read_text())


@pytest.fixture
def tiny():
    """n=2, d=1, x=(0,1), y=(0,1), rho=1."""
    return build_problem(np.array([[0.0], [1.0]]), np.array([0.0, 1.0]), 1.0)


def sd1_problem(n, d, rho, seed, snr=3.0):
    ds = gen_synthetic("SD1", n, d, snr, seed)
    return build_problem(ds.X, ds.y, rho)


def random_problem(n, d, rho, seed):
    rng = np.random.default_rng(seed)
    return build_problem(rng.standard_normal((n, d)), rng.standard_normal(n), rho)


# ------------------------------------------------------------ acceptance report

_ACCEPTANCE: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): numbered acceptance criterion")


def pytest_runtest_logreport(report):
    marker = getattr(report, "acceptance", None)
    if marker is None:
        return
    num, title = marker
    failed = report.failed or (report.when == "call" and report.skipped)
    prev = _ACCEPTANCE.get(num, (title, "PASS"))[1]
    if report.when == "call" or failed:
        _ACCEPTANCE[num] = (title, "FAIL" if failed or prev == "FAIL" else "PASS")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    m = item.get_closest_marker("acceptance")
    if m is not None:
        outcome.get_result().acceptance = tuple(m.args)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_ACCEPTANCE):
        title, status = _ACCEPTANCE[num]
        terminalreporter.write_line(f"criterion {num}: {status}  {title}")
