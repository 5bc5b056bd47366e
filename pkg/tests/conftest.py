import sys
from collections import defaultdict
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

# criterion number -> list of (test id, outcome, note)
_CRITERIA = defaultdict(list)
_TITLES = {}


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running checks (large Krylov solves)")
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when != "call" and not (report.failed or report.skipped):
        return
    number, title = marker.args
    _TITLES[number] = title
    if hasattr(report, "wasxfail"):
        state = "FAIL" if report.skipped else "XPASS"
        note = report.wasxfail
    elif report.passed:
        state, note = "PASS", ""
    elif report.skipped:
        state, note = "SKIP", ""
    else:
        state, note = "FAIL", ""
    _CRITERIA[number].append((item.name, state, note))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        rows = _CRITERIA[number]
        ok = all(state == "PASS" for _, state, _ in rows)
        tr.write_line(f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {_TITLES[number]}")
        if not ok:
            for name, state, note in rows:
                if state != "PASS":
                    tr.write_line(f"    {state}: {name}" + (f" ({note})" if note else ""))
