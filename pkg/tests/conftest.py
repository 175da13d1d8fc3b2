from __future__ import annotations

import time
from contextlib import contextmanager

import pytest

_RESULTS: list[str] = []


class _Criterion:
    def __init__(self):
        self.failures: list[str] = []
        self.notes: list[str] = []

    def check(self, ok, what):
        if not ok:
            self.failures.append(str(what))
        return ok

    def note(self, text):
        self.notes.append(str(text))


@pytest.fixture
def criterion():
    """Context manager recording one acceptance criterion with its runtime limit."""

    @contextmanager
    def run(number, title, limit):
        c = _Criterion()
        t0 = time.perf_counter()
        error = None
        try:
            yield c
        except Exception as e:  # recorded as FAIL, then re-raised
            error = e
        elapsed = time.perf_counter() - t0
        if elapsed > limit:
            c.failures.append(f"runtime {elapsed:.1f}s > {limit}s")
        if error is not None:
            c.failures.append(f"{type(error).__name__}: {error}")
        status = "PASS" if not c.failures else "FAIL"
        extra = "; ".join(c.notes + c.failures)
        line = f"{status} criterion {number:2d} {title} ({elapsed:.1f}s)" + (f": {extra}" if extra else "")
        _RESULTS.append(line)
        print(line)
        if error is not None:
            raise error
        assert not c.failures, line

    return run


def pytest_terminal_summary(terminalreporter):
    if _RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in _RESULTS:
            terminalreporter.write_line(line)
