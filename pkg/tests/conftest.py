"""Collects acceptance outcomes and prints one PASS/FAIL line per criterion."""

import pytest

_results = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    number, title = marker.args
    entry = _results.setdefault(number, {"title": title, "ok": True, "notes": []})
    failed = report.failed or hasattr(report, "wasxfail")
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        if failed:
            entry["ok"] = False
            reason = getattr(report, "wasxfail", "") or "assertion failed"
            entry["notes"].append(f"{item.name}: {reason}")
        for key, value in report.user_properties:
            if key == "detail":
                entry["notes"].append(str(value))


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_results):
        entry = _results[number]
        status = "PASS" if entry["ok"] else "FAIL"
        terminalreporter.write_line(f"criterion {number:>2}: {status}  {entry['title']}")
        for note in entry["notes"]:
            terminalreporter.write_line(f"              {note}")
