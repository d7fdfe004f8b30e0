"""Collects one pass/fail line per acceptance criterion and prints them at
the end of the run."""
import pytest

_LINES = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number and title")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or report.when not in ("setup", "call"):
        return
    n, title = mark.args
    if report.when == "setup" and report.passed:
        return
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    verdict = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")
    _LINES.setdefault(n, [title, []])[1].append((verdict, detail))


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_LINES):
            title, parts = _LINES[n]
            verdicts = {v for v, _ in parts}
            verdict = "FAIL" if "FAIL" in verdicts else ("SKIP" if "SKIP" in verdicts else "PASS")
            details = "; ".join(d for _, d in parts if d)
            terminalreporter.write_line(f"criterion {n} {verdict}: {title}" + (f"  [{details}]" if details else ""))
