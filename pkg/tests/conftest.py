import numpy as np
import pytest

from hitgap.chain_model import (
    TargetSet,
    discretize_diffusion_1d,
    invariant_measure,
    ou_spec,
)
from hitgap.corpus import random_corpus, two_state


@pytest.fixture(scope="session")
def two():
    chain = two_state()
    return chain, invariant_measure(chain), TargetSet((0,), 2)


@pytest.fixture(scope="session")
def small_corpus():
    return random_corpus(count=25, targets_per_chain=3, n_max=30, seed=11)


@pytest.fixture(scope="session")
def ou2000():
    chain = discretize_diffusion_1d(ou_spec(), 2000)
    m = invariant_measure(chain)
    return chain, m, TargetSet.from_interval(chain, -1.0, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
