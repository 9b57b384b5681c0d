import time

import pytest

# one pass/fail line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []
SESSION_START = time.perf_counter()


def pytest_collection_modifyitems(items):
    # acceptance last, so the wall-clock criterion sees the rest of the suite
    items.sort(key=lambda it: it.nodeid.startswith("tests/test_acceptance.py"))


@pytest.fixture
def acceptance_line():
    def record(number: int, ok: bool, detail: str):
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
        terminalreporter.write_line(f"session wall-clock: {time.perf_counter() - SESSION_START:.1f} s")
