import time

import pytest

from holdn import PolicyConfig, SpeechStream, StoredFrameEncoder, TableModel, default_adapter

# Token ids for t1..t4 in an 8-id vocabulary (0-3 reserved).
T1, T2, T3, T4 = 4, 5, 6, 7

SUITE_BUDGET_S = 60.0

_criteria = []
_started = time.perf_counter()


@pytest.fixture
def golden():
    """6000 ms stream at 50 fps with a four-token table model."""
    return {
        "stream": SpeechStream("golden", 6000, 50),
        "model": TableModel((T1, T2, T3, T4), (50, 100, 200, 250), 8),
        "config": PolicyConfig(start_ms=2000, chunk_ms=2500, hold_n=2, beam=1),
        "encoder": StoredFrameEncoder(),
        "adapter": default_adapter(),
    }


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        status = "PASS" if rep.passed else "FAIL"
        _criteria.append(f"{status}  {marker.args[0]}  ({rep.duration:.2f}s)")


def pytest_sessionfinish(session, exitstatus):
    if not _criteria:
        return
    elapsed = time.perf_counter() - _started
    ok = elapsed < SUITE_BUDGET_S
    _criteria.append(f"{'PASS' if ok else 'FAIL'}  full suite runtime < {SUITE_BUDGET_S:.0f}s  ({elapsed:.1f}s)")
    if not ok and session.exitstatus == 0:
        session.exitstatus = 1


def pytest_terminal_summary(terminalreporter):
    if _criteria:
        terminalreporter.section("acceptance criteria")
        for line in _criteria:
            terminalreporter.write_line(line)
