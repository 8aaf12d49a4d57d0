import pytest

_LOG = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""
    log = request.config.stash.setdefault(_LOG, [])

    def record(num, title, ok, detail):
        line = f"criterion {num}: {'PASS' if ok else 'FAIL'}  {title}  [{detail}]"
        log.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    log = config.stash.get(_LOG, [])
    if log:
        terminalreporter.section("acceptance criteria")
        for line in sorted(log, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
