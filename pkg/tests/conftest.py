import time
import warnings

import numpy as np
import pytest
from hypothesis import settings

from fracspde.errors import AliasingWarning

settings.register_profile("default", deadline=None, max_examples=40, derandomize=True)
settings.load_profile("default")


@pytest.fixture(autouse=True)
def _quiet_aliasing():
    # coarse desk grids alias by design for beta < 1; tests that care re-enable it
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AliasingWarning)
        yield


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)


# {{{ acceptance reporting

ACCEPTANCE_LINES: list[str] = []


class Criterion:
    """Times one acceptance criterion and records a single pass/fail line.

    Set ``ok`` and ``detail`` inside the ``with`` block; the line is printed
    in the terminal summary and the test fails when ``ok`` is false or the
    runtime budget is exceeded.
    """

    def __init__(self, number: int, title: str, budget: float | None = None):
        self.number, self.title, self.budget = number, title, budget
        self.ok, self.detail = False, ""

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        elapsed = time.perf_counter() - self.t0
        if exc_type is not None:
            self.ok, self.detail = False, f"error: {exc_type.__name__}: {exc}"
        in_time = self.budget is None or elapsed <= self.budget
        budget = "" if self.budget is None else f" / {self.budget:g}s"
        verdict = "PASS" if self.ok and in_time else "FAIL"
        slow = "" if in_time else " (over time budget)"
        line = f"criterion {self.number:>2} {verdict}  {self.title}: {self.detail}  [{elapsed:.1f}s{budget}]{slow}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        if exc_type is None:
            assert self.ok, line
            assert in_time, line
        return False


@pytest.fixture
def criterion():
    return Criterion


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)


# }}}
