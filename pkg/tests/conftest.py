import os
import re

from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

ACCEPTANCE: dict[int, tuple[str, str]] = {}


# ---- acceptance report: one line per criterion in the terminal summary

_CRITERION = re.compile(r"test_criterion_(\d+)")


def pytest_runtest_logreport(report):
    match = _CRITERION.search(report.nodeid)
    if not match or (report.when != "call" and not report.failed):
        return
    detail = dict(report.user_properties).get("detail", "")
    if report.failed and not detail:
        detail = str(report.longrepr).strip().splitlines()[-1][:160]
    ACCEPTANCE[int(match.group(1))] = ("PASS" if report.passed else "FAIL", detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        status, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"CRITERION {number}: {status} {detail}".rstrip())
