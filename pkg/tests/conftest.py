import pytest

_CRITERIA_KEY = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_CRITERIA_KEY] = {}


@pytest.fixture
def criterion(request):
    """record(n, passed, detail) stores and prints one acceptance line."""
    lines = request.config.stash[_CRITERIA_KEY]

    def record(n, passed, detail):
        line = f"CRITERION {n}: {'PASS' if passed else 'FAIL'} {detail}"
        lines[n] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_CRITERIA_KEY, {})
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(lines):
        terminalreporter.write_line(lines[n])
