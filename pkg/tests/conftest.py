import contextlib
import time

import pytest

_RESULTS = {}


@pytest.fixture
def criterion():
    """Context manager recording one acceptance criterion and its time budget."""

    @contextlib.contextmanager
    def run(number, title, budget):
        start = time.time()
        try:
            yield
        except BaseException as exc:
            _RESULTS[number] = (False, title, time.time() - start, budget,
                                f"{type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''}")
            raise
        elapsed = time.time() - start
        ok = elapsed <= budget
        _RESULTS[number] = (ok, title, elapsed, budget, "" if ok else "over time budget")
        assert ok, f"criterion {number} took {elapsed:.1f} s (budget {budget} s)"

    return run


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_RESULTS):
        ok, title, elapsed, budget, note = _RESULTS[n]
        line = f"[{'PASS' if ok else 'FAIL'}] {n!s:>3}. {title} ({elapsed:.1f} s of {budget} s)"
        terminalreporter.write_line(line + (f"  {note}" if note else ""))
