import math

import pytest

from radshoot import make_family

_LINES: list[str] = []


@pytest.fixture(scope="session")
def troy():
    return make_family("troy")


@pytest.fixture(scope="session")
def pd31():
    return make_family("power_diff", {"p": 3, "q": 1})


@pytest.fixture(scope="session")
def sqrt_power():
    return make_family("pure_power", {"q": 0.5})


@pytest.fixture(scope="session")
def linear():
    return make_family("pure_power", {"q": 1.0})


@pytest.fixture
def record():
    """Log one acceptance line; printed in the terminal summary too."""
    def _record(num, ok, detail, seconds=math.nan):
        line = f"criterion {num:>2}: {'PASS' if ok else 'FAIL'}  ({seconds:.2f}s)  {detail}"
        _LINES.append(line)
        print(line)
        return ok
    return _record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
