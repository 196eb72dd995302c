import pytest

from ebbflow.netsim import run
from ebbflow.netsim.bundled import BUNDLED, load_bundled

_RUNS = {}


def bundled_run(name):
    """One simulation per bundled scenario per test session."""
    if name not in _RUNS:
        _RUNS[name] = run(load_bundled(name))
    return _RUNS[name]


@pytest.fixture(scope="session")
def runs():
    return {name: bundled_run(name) for name in BUNDLED}


@pytest.fixture(scope="session")
def p1_run():
    return bundled_run("p1_partition")


@pytest.fixture(scope="session")
def p2_run():
    return bundled_run("p2_baseline")


@pytest.fixture(scope="session")
def attack_run():
    return bundled_run("attack_equivocate")


_ACCEPTANCE_KEY = pytest.StashKey[dict]()


@pytest.fixture
def criterion(request):
    """Record one acceptance criterion's verdict; prints a PASS/FAIL line."""
    table = request.config.stash.setdefault(_ACCEPTANCE_KEY, {})

    def record(number, title, ok, detail=""):
        line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}  ({detail})"
        table[number] = line
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    table = config.stash.get(_ACCEPTANCE_KEY, {})
    if table:
        terminalreporter.section("acceptance criteria")
        for number in sorted(table):
            terminalreporter.write_line(table[number])
