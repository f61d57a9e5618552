import numpy as np
import pytest

from lumina.autodiff import Tensor

# Outcomes of the acceptance tests, reported as one line per criterion at
# the end of the session.
_CRITERIA = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_criterion_" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    prev = _CRITERIA.get(name, "PASS")
    if report.failed:
        _CRITERIA[name] = "FAIL"
    elif report.when == "call" and report.skipped:
        _CRITERIA[name] = "SKIP"
    elif report.when == "call":
        _CRITERIA[name] = prev


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_CRITERIA, key=lambda n: int(n.split("_")[2])):
        terminalreporter.write_line(f"{_CRITERIA[name]}  {name}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def rand_tensor(rng, shape, lo=0.0, hi=1.0, dtype=np.float64, grad=False):
    return Tensor(rng.uniform(lo, hi, size=shape).astype(dtype), requires_grad=grad)
