import pytest

_ACCEPTANCE: list[tuple[str, str, str]] = []


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(label): exit criterion reported in the summary")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.skipped):
        status = "PASS" if rep.passed else ("SKIP" if rep.skipped else "FAIL")
        measured = "; ".join(f"{k}={v}" for k, v in item.user_properties)
        _ACCEPTANCE.append((status, marker.args[0], measured))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for status, label, measured in _ACCEPTANCE:
        line = f"[{status}] {label}"
        if measured:
            line += f"  ({measured})"
        terminalreporter.write_line(line)
