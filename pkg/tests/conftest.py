from __future__ import annotations

import re

_CRITERION = re.compile(r"test_criterion_(\d+)")
_titles: dict[int, str] = {}
_outcomes: dict[int, list[str]] = {}


def pytest_collection_modifyitems(items):
    for item in items:
        m = _CRITERION.search(item.name)
        if m and item.obj.__doc__:
            _titles.setdefault(int(m.group(1)), item.obj.__doc__.strip().splitlines()[0])


def pytest_runtest_logreport(report):
    m = _CRITERION.search(report.nodeid)
    if not m:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _outcomes.setdefault(int(m.group(1)), []).append(report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_outcomes):
        ok = all(o == "passed" for o in _outcomes[num])
        terminalreporter.write_line(f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {_titles.get(num, '')}")
