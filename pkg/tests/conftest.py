import numpy as np
import pytest

from nelab import _parallel


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(autouse=True)
def _single_thread():
    _parallel.set_threads(1)
    yield
    _parallel.set_threads(1)


@pytest.fixture
def criterion(request):
    """Record one summary line per acceptance criterion."""
    lines = request.config.__dict__.setdefault("_criterion_lines", {})

    def record(number: int, passed: bool, detail: str, seconds: float, limit: float):
        ok = passed and seconds < limit
        lines[number] = (f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  "
                         f"{detail}  [{seconds:.1f}s, limit {limit:g}s]")
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.__dict__.get("_criterion_lines")
    if lines:
        terminalreporter.section("acceptance criteria")
        for k in sorted(lines):
            terminalreporter.write_line(lines[k])
