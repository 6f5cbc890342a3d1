from __future__ import annotations

import numpy as np
import pytest

from vadkit.patches import COUNTERS
from vadkit.tensor import Tensor, backward


def numeric_grad(fn, arrays: list[np.ndarray], index: int, h: float = 1e-5, coords=None) -> np.ndarray:
    """Central differences of scalar ``fn(*arrays)`` with respect to ``arrays[index]``.

    ``coords`` restricts the estimate to those flat indices; the rest stay 0.
    """
    a = arrays[index]
    g = np.zeros_like(a)
    flat, gflat = a.reshape(-1), g.reshape(-1)
    for i in range(flat.size) if coords is None else coords:
        orig = flat[i]
        flat[i] = orig + h
        up = fn(*arrays)
        flat[i] = orig - h
        down = fn(*arrays)
        flat[i] = orig
        gflat[i] = (up - down) / (2 * h)
    return g


# Gradients smaller than this are compared in absolute terms. A bias feeding a
# batchnorm has an exactly-zero gradient, and its numeric estimate is pure
# rounding noise (~1e-10), so a pure ratio would be meaningless there.
GRAD_FLOOR = 1e-4


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Largest elementwise deviation, relative to the gradient's own scale."""
    scale = max(np.abs(analytic).max(), np.abs(numeric).max(), GRAD_FLOOR)
    return float(np.abs(analytic - numeric).max() / scale)


def check_gradients(build, arrays: list[np.ndarray], h: float = 1e-5, max_coords: int | None = None) -> float:
    """Max relative error over every input of ``build(*tensors) -> scalar Tensor``.

    With ``max_coords``, larger inputs are probed at that many seeded random
    coordinates instead of exhaustively.
    """
    arrays = [np.asarray(a, dtype=np.float64) for a in arrays]
    tensors = [Tensor(a, requires_grad=True) for a in arrays]
    backward(build(*tensors))

    def scalar(*arrs):
        return build(*(Tensor(a) for a in arrs)).item()

    pick = np.random.default_rng(0)
    worst = 0.0
    for i, t in enumerate(tensors):
        analytic = np.zeros_like(arrays[i]) if t.grad is None else t.grad
        coords = None
        if max_coords is not None and arrays[i].size > max_coords:
            coords = np.sort(pick.choice(arrays[i].size, max_coords, replace=False))
        numeric = numeric_grad(scalar, arrays, i, h, coords)
        if coords is not None:
            analytic = analytic.reshape(-1)[coords]
            numeric = numeric.reshape(-1)[coords]
        worst = max(worst, relative_error(analytic, numeric))
    return worst


@pytest.fixture
def gradcheck():
    return check_gradients


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def counters():
    COUNTERS.reset()
    yield COUNTERS
    COUNTERS.reset()


# ------------------------------------------------------ acceptance reporting
# Tests marked ``criterion(number, title)`` are folded into one pass/fail line
# per criterion at the end of the run. Details come from ``record_property``.
def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")
    config._criteria = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or not (report.when == "call" or report.failed):
        return
    number, title = mark.args
    entry = item.config._criteria.setdefault(number, {"title": title, "ok": True, "details": []})
    entry["ok"] = entry["ok"] and report.passed
    entry["details"].extend(f"{k}={v}" for k, v in item.user_properties if report.when == "call")


def pytest_terminal_summary(terminalreporter, config):
    criteria = getattr(config, "_criteria", {})
    if not criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(criteria):
        entry = criteria[number]
        status = "PASS" if entry["ok"] else "FAIL"
        details = f" ({', '.join(entry['details'])})" if entry["details"] else ""
        terminalreporter.write_line(f"criterion {number} {status}: {entry['title']}{details}")
