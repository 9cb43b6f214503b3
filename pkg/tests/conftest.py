import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from netsel.integrate import DiscretizationConfig
from netsel.netmodels import (
    CrnSpec,
    MemoryNetworkSpec,
    crn_model,
    duffing_model,
    memory_model,
    random_duffing_spec,
)

settings.register_profile(
    "netsel", deadline=None, suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture]
)
settings.load_profile("netsel")


def random_memory_model(N=9, p=2, seed=0, gamma=0.8):
    rng = np.random.default_rng(seed)
    patterns = rng.choice([-1.0, 1.0], size=(p, N))
    return memory_model(MemoryNetworkSpec(patterns, gamma=gamma))


def chain_crn(seed=0):
    """A <=> B <=> C with random positive rates."""
    rng = np.random.default_rng(seed)
    pi = np.array([[1, 0, 0], [0, 1, 0]])
    om = np.array([[0, 1, 0], [0, 0, 1]])
    return CrnSpec(pi, om, rng.uniform(0.5, 2.0, 2), rng.uniform(0.5, 2.0, 2))


def fd_jacobian(f, x, rel=1e-6):
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(x.size):
        step = rel * max(1.0, abs(x[i]))
        e = np.zeros_like(x)
        e[i] = step
        cols.append((f(x + e) - f(x - e)) / (2 * step))
    return np.array(cols).T


@pytest.fixture
def memory9():
    return random_memory_model(9, 2, seed=3)


@pytest.fixture
def duffing5():
    return duffing_model(random_duffing_spec(5, seed=2, connected=True))


@pytest.fixture
def crn3():
    return crn_model(chain_crn(1))


@pytest.fixture
def ti_config():
    return DiscretizationConfig("TI", 1e-3)


@pytest.fixture
def fe_config():
    return DiscretizationConfig("FE", 1e-3)


ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line per acceptance criterion."""
    lines = request.config.stash.setdefault(ACCEPTANCE_KEY, [])

    def record(number, passed, detail=""):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'} {detail}".rstrip()
        print(line)
        lines.append(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance")
        for line in sorted(lines, key=lambda l: int(l.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
