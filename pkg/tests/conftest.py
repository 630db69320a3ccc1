import numpy as np
import pytest

from quadsparse.ensemble import MeasurementEnsemble, gen_ensemble, gen_signal, measure


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: statistical checks that take tens of seconds")


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def make_problem(n, m, s, seed=0, mode="materialized"):
    ens = gen_ensemble(n, m, (seed, 0), mode=mode)
    x = gen_signal(n, s, (seed, 1)).values
    y = measure(ens, x).y
    return ens, x, y


def random_ensemble(rng, n, m):
    return MeasurementEnsemble.from_array(rng.standard_normal((m, n, n)))


def sparse_vector(rng, n, s):
    x = np.zeros(n)
    x[rng.choice(n, s, replace=False)] = rng.standard_normal(s)
    return x


def pytest_terminal_summary(terminalreporter):
    import sys
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for number in sorted(results):
            terminalreporter.write_line(results[number])
