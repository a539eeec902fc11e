"""Test-session plumbing: surface the acceptance criterion lines.

The acceptance module records one PASS/FAIL line per criterion; pytest
captures ordinary prints, so the lines are replayed here as a summary
section that always reaches the run log.
"""
from __future__ import annotations

import sys


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "CRITERION_LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
