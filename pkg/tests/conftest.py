from pathlib import Path

import pytest

from gdpfed.data import DEFAULT_DATA_PATH, load_bcwd

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def bcwd_path():
    return DEFAULT_DATA_PATH


@pytest.fixture(scope="session")
def fixture_path():
    return FIXTURES / "bcwd_10.data"


@pytest.fixture(scope="session")
def bcwd():
    return load_bcwd()


ACCEPTANCE_LINES = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_LINES] = []


@pytest.fixture
def acceptance_report(request):
    """Record one PASS/FAIL line for an acceptance criterion and echo it."""
    lines = request.config.stash[ACCEPTANCE_LINES]

    def report(number, title, passed, detail=""):
        line = f"[{'PASS' if passed else 'FAIL'}] {number:>2}. {title}: {detail}"
        lines.append((number, line))
        print(line)
        return passed

    return report


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
