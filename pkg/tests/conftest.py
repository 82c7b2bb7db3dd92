"""Shared test helpers.

`numeric_grad` is the reference gradient everything in the autodiff suite is
checked against: a central finite difference evaluated in float64, one entry
at a time.
"""

from __future__ import annotations

import numpy as np
import pytest

from dyslat.autodiff import Tensor


def numeric_grad(fn, arrays: list[np.ndarray], eps: float = 1e-6) -> list[np.ndarray]:
    """Central-difference gradient of scalar fn(*arrays) w.r.t. each array."""
    grads = []
    for i, a in enumerate(arrays):
        a = np.asarray(a, dtype=np.float64)
        g = np.zeros_like(a)
        flat = a.reshape(-1)
        gflat = g.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + eps
            hi = fn(*[x if k != i else a for k, x in enumerate(arrays)])
            flat[j] = orig - eps
            lo = fn(*[x if k != i else a for k, x in enumerate(arrays)])
            flat[j] = orig
            gflat[j] = (hi - lo) / (2.0 * eps)
        grads.append(g)
    return grads


def check_gradients(build_loss, shapes, seed=0, rel_tol=1e-4, eps=1e-6, scale=1.0):
    """Compare autodiff gradients of build_loss against finite differences.

    build_loss takes one Tensor per entry of `shapes` and returns a scalar
    Tensor. Comparison uses a relative error with an absolute floor so that
    near-zero gradients do not blow the ratio up.
    """
    rng = np.random.default_rng(seed)
    arrays = [rng.standard_normal(s) * scale for s in shapes]

    tensors = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    loss = build_loss(*tensors)
    assert loss.data.ndim == 0, "loss must be scalar"
    loss.backward()
    analytic = [t.grad.copy() for t in tensors]

    def scalar_fn(*arrs):
        ts = [Tensor(a) for a in arrs]
        return float(build_loss(*ts).data)

    numeric = numeric_grad(scalar_fn, [a.copy() for a in arrays], eps=eps)

    for got, want in zip(analytic, numeric):
        denom = np.maximum(np.abs(want), 1e-4)
        rel = np.abs(got - want) / denom
        assert rel.max() < rel_tol, f"max rel grad error {rel.max():.3e}"


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance reporting ---------------------------------------------------
# Tests marked @pytest.mark.criterion("...") get one PASS/FAIL line each in
# the terminal summary, derived from the actual test outcome. Tests may add
# measured numbers via the `criterion_details` dict.

criterion_details: dict = {}
_criterion_results: list = []


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "criterion(name): acceptance criterion, reported "
                   "pass/fail in the terminal summary")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        marker = item.get_closest_marker("criterion")
        if marker:
            _criterion_results.append(
                (marker.args[0], rep.passed, rep.duration))


def pytest_terminal_summary(terminalreporter):
    if not _criterion_results:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for name, passed, duration in _criterion_results:
        status = "PASS" if passed else "FAIL"
        detail = criterion_details.get(name, "")
        suffix = f" -- {detail}" if detail else ""
        terminalreporter.write_line(
            f"[{status}] {name} ({duration:.1f}s){suffix}")
