import numpy as np
import pytest

from leqgpursuit import basic_spec
from leqgpursuit.kron import SystemSpec

_CRITERIA = {}


@pytest.fixture
def criterion(request):
    """Record a pass/fail line for an acceptance criterion."""

    def record(number, title):
        _CRITERIA[number] = (title, request.node)

    return record


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if report.when == "call":
        for number, (title, node) in _CRITERIA.items():
            if node is item:
                _CRITERIA[number] = (title, "PASS" if report.passed else "FAIL")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, status = _CRITERIA[number]
        if not isinstance(status, str):
            status = "NOT RUN"
        terminalreporter.write_line(f"[{status}] criterion {number}: {title}")


@pytest.fixture
def basic():
    return basic_spec()


def random_spec(rng, d, m=None, epsilon=0.0):
    """Random model with (A, B) controllable and Q, R, W positive definite."""
    m = m or d
    A = rng.normal(size=(d, d))
    B = rng.normal(size=(d, m))
    G = rng.normal(size=(d, d)) + 0.5 * np.eye(d)
    F = rng.normal(size=(d, d)) + 0.5 * np.eye(d)
    q = rng.normal(size=(d, d))
    r = rng.normal(size=(m, m))
    return SystemSpec(A=A, B=B, C=np.eye(d), F=F, G=G, H=np.eye(d),
                      Q=q @ q.T + 0.5 * np.eye(d), R=r @ r.T + 0.5 * np.eye(m), epsilon=epsilon)
