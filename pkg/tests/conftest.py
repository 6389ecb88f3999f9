"""Acceptance bookkeeping: tests marked ``criterion(n)`` are grouped and the
terminal summary prints one PASS/FAIL line per criterion."""

from collections import defaultdict

import pytest

CRITERIA = {
    1: "KL arithmetic",
    2: "first-layer decay rates within 15% of target",
    3: "ordering isolated <= distributed <= centralized",
    4: "second-layer rate between hitting-time bound lines; K2 exact",
    5: "distributed KL sandwich, monotonicity, bounds, convergence",
    6: "oracle equivalences",
    7: "false-alarm guarantee",
    8: "determinism",
}

_owner: dict[str, int] = {}
_outcomes: dict[int, list] = defaultdict(list)
_details: dict[int, list] = defaultdict(list)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark is not None:
            _owner[item.nodeid] = mark.args[0]


def pytest_runtest_logreport(report):
    n = _owner.get(report.nodeid)
    if n is None:
        return
    if report.when == "call" or report.outcome != "passed":
        _outcomes[n].append((report.nodeid.split("::")[-1], report.outcome))


@pytest.fixture
def detail(request):
    """Record a one-line measurement shown under the criterion summary."""
    mark = request.node.get_closest_marker("criterion")

    def add(text: str):
        if mark is not None:
            _details[mark.args[0]].append(text)

    return add


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(CRITERIA):
        results = _outcomes.get(n)
        if not results:
            tr.write_line(f"criterion {n}: NOT RUN  {CRITERIA[n]}")
            continue
        failed = [name for name, outcome in results if outcome != "passed"]
        status = "PASS" if not failed else "FAIL"
        line = f"criterion {n}: {status}  {CRITERIA[n]} ({len(results) - len(failed)}/{len(results)} checks)"
        if failed:
            line += "; failing: " + ", ".join(failed)
        tr.write_line(line)
        for text in _details.get(n, []):
            tr.write_line(f"    {text}")
