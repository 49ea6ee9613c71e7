import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def acceptance():
    """``report(n, ok, detail)`` records one line for the acceptance summary."""
    def report(n, ok, detail, status=None):
        line = f"CRITERION {n}: {status or ('PASS' if ok else 'FAIL')} {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return report
