"""Per-criterion PASS/FAIL summary for tests marked ``acceptance(number, title)``."""

from collections import defaultdict

import pytest

_results = defaultdict(list)   # number -> [(title, outcome)]


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = item.get_closest_marker("acceptance")
    if m is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        _results[m.args[0]].append((m.args[1], rep.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_results):
        runs = _results[number]
        outcomes = {o for _, o in runs}
        if "failed" in outcomes:
            status = "FAIL"
        elif outcomes == {"skipped"}:
            status = "SKIP"
        else:
            status = "PASS"
        tr.write_line(f"criterion {number}: {status}  {runs[0][0]}")
