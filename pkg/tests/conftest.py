import pytest

from factorengine import synth

ACCEPTANCE = {}
NOTES = []  # (criterion, text) lines shown under the summary


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion covered by this test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    name = marker.args[0]
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        ACCEPTANCE[name] = rep.outcome


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in ACCEPTANCE.items():
        status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"[{status}] {name}")
        for crit, text in NOTES:
            if crit == name:
                for line in text.rstrip("\n").splitlines():
                    terminalreporter.write_line(f"       {line}")


@pytest.fixture
def note(request):
    marker = request.node.get_closest_marker("criterion")
    name = marker.args[0] if marker else request.node.name
    return lambda text: NOTES.append((name, str(text)))


@pytest.fixture(scope="session")
def bundled():
    return synth.bundled()
