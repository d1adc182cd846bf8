import sys
import time
from contextlib import contextmanager
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from desplant import ExtractionConfig, double_integrator_system, extract  # noqa: E402

ACCEPTANCE_RESULTS = []


@pytest.fixture(scope="session")
def di_system():
    return double_integrator_system()


@pytest.fixture(scope="session")
def di_automaton(di_system):
    return extract(di_system, ExtractionConfig(samples_per_cell=64, seed=0))


@pytest.fixture
def criterion():
    """Record one acceptance line: number, title, verdict, measured detail."""

    @contextmanager
    def _criterion(number, title):
        detail = {}
        start = time.perf_counter()
        try:
            yield detail
        except BaseException as exc:
            elapsed = time.perf_counter() - start
            ACCEPTANCE_RESULTS.append((number, title, False, f"{type(exc).__name__}: {exc}"[:200], elapsed))
            raise
        elapsed = time.perf_counter() - start
        note = ", ".join(f"{k}={v}" for k, v in detail.items())
        ACCEPTANCE_RESULTS.append((number, title, True, note, elapsed))

    return _criterion


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, ok, note, elapsed in sorted(ACCEPTANCE_RESULTS):
        verdict = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"[{verdict}] {number}. {title} ({elapsed:.2f}s) {note}")
