import numpy as np
import pytest

from difftopo.autodiff import tape as tape_mod
from difftopo.sparse import counters


@pytest.fixture
def scratch_ops():
    """Lets a test register throwaway op ids; they are removed afterwards."""
    before = set(tape_mod._PULLBACKS)
    yield
    for k in set(tape_mod._PULLBACKS) - before:
        del tape_mod._PULLBACKS[k]


@pytest.fixture
def fresh_counters():
    counters.reset()
    yield counters
    counters.reset()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_ACCEPTANCE_KEY = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE_KEY] = {}


@pytest.fixture
def criterion(request):
    """Record one acceptance line: ``criterion(n, passed, detail)``."""
    results = request.config.stash[_ACCEPTANCE_KEY]

    def record(n, passed, detail):
        line = f"criterion {n:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        results[n] = line
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(_ACCEPTANCE_KEY, {})
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
