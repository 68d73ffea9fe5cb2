from __future__ import annotations

ACCEPTANCE_LINES: dict[int, str] = {}


def record_criterion(number, passed, detail):
    """Store the PASS/FAIL line of an acceptance criterion and print it."""
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'} | {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
