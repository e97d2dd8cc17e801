import pytest

from foggate import crypto
from foggate.identity import DeviceIdentity


@pytest.fixture(scope="session")
def keys():
    """A handful of 2048-bit key pairs; RSA generation dominates test time otherwise."""
    return [crypto.generate_keypair() for _ in range(4)]


@pytest.fixture(scope="session")
def server_identity(keys):
    return DeviceIdentity("fog-server-01", keys[0])


@pytest.fixture(scope="session")
def device_identity(keys):
    return DeviceIdentity("device-01", keys[1])


@pytest.fixture(scope="session")
def other_identity(keys):
    return DeviceIdentity("device-02", keys[2])


@pytest.fixture(scope="session")
def attacker_keys(keys):
    return keys[3]


# acceptance reporting: one PASS/FAIL line per criterion in the terminal summary

_RESULTS = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_RESULTS] = {}


class _Criterion:
    def __init__(self, results, number, title):
        self.results, self.number, self.title = results, number, title
        self.detail = ""

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        status = "PASS" if exc_type is None else "FAIL"
        note = self.detail if exc_type is None else f"{exc_type.__name__}: {str(exc).splitlines()[0] if str(exc) else ''}"
        self.results[self.number] = f"criterion {self.number} {status}  {self.title}  [{note}]"
        return False


@pytest.fixture
def criterion(request):
    results = request.config.stash[_RESULTS]
    return lambda number, title: _Criterion(results, number, title)


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(_RESULTS, {})
    if results:
        terminalreporter.section("acceptance criteria")
        for number in sorted(results):
            terminalreporter.write_line(results[number])
