import pytest

_LINES = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_LINES] = []


@pytest.fixture
def criterion(request):
    """``criterion(n, ok, detail)`` records one acceptance line and fails the test when ``ok`` is false."""
    lines = request.config.stash[_LINES]

    def record(n, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {detail}"
        lines.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
