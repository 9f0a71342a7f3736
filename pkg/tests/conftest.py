import pytest

_VERDICTS = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_VERDICTS] = {}
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


@pytest.fixture
def verdict(request):
    """Record the outcome of the acceptance criterion the test is marked with."""
    n = request.node.get_closest_marker("criterion").args[0]
    table = request.config.stash[_VERDICTS]

    def record(ok: bool, detail: str):
        table[n] = ("PASS" if ok else "FAIL", detail)
        return ok

    return record


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or rep.when != "call" or rep.passed:
        return
    table = item.config.stash[_VERDICTS]
    if marker.args[0] not in table:
        msg = str(call.excinfo.value).splitlines()[0] if call.excinfo else "error"
        table[marker.args[0]] = ("FAIL", f"error: {msg}")


def pytest_terminal_summary(terminalreporter, config):
    table = config.stash[_VERDICTS]
    if not table:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in sorted(table):
        status, detail = table[n]
        terminalreporter.write_line(f"criterion {n}: {status}  {detail}")
