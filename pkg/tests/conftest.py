import pytest


def pytest_runtest_logreport(report):
    # acceptance criteria announce their own PASS lines; mirror failures so
    # every criterion ends up with exactly one status line
    if report.when == "call" and "test_acceptance" in report.nodeid:
        if report.failed:
            name = report.nodeid.split("::")[-1]
            print(f"\n[acceptance] {name}: FAIL")
