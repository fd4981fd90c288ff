import numpy as np
import pytest

from sls_realization.pipeline import meta_run
from sls_realization.realization.cluster import cluster_states, label_runs, stationary_set
from sls_realization.realization.ltv import realize_range
from sls_realization.realization.switch import detect_switches
from sls_realization.system import (
    DiscreteState,
    SlsModel,
    SwitchingSequence,
    generate_markov,
    mixed_switching,
    three_state_example,
)
from sls_realization.utils.config import config_run


@pytest.fixture(scope="session")
def example_states():
    return three_state_example()


@pytest.fixture(scope="session")
def example_model(example_states):
    return SlsModel(states=example_states, switching=mixed_switching(3))


@pytest.fixture(scope="session")
def example_markov(example_model):
    return generate_markov(example_model, band=4 * example_model.n)


@pytest.fixture(scope="session")
def example_realization(example_markov):
    return realize_range(example_markov)


@pytest.fixture(scope="session")
def example_stationary(example_markov):
    return stationary_set(example_markov)


@pytest.fixture(scope="session")
def example_cluster(example_realization, example_stationary):
    return cluster_states(example_realization, example_stationary)


@pytest.fixture(scope="session")
def example_runs(example_realization, example_stationary, example_cluster):
    return label_runs(example_realization, example_stationary, example_cluster)


@pytest.fixture(scope="session")
def example_estimate(example_realization, example_markov, example_stationary, example_cluster, example_runs):
    return detect_switches(example_realization, example_markov, example_stationary, example_cluster, example_runs)


@pytest.fixture(scope="session")
def example_report(example_model, example_markov):
    return meta_run(example_markov, config_run("example", "noiseless"), truth=example_model)


@pytest.fixture
def scalar_model():
    """
    Two first-order submodels with 20 samples each.
    """

    states = (
        DiscreteState(A=[[0.5]], B=[[1.0]], C=[[1.0]], D=[[0.2]], label=1),
        DiscreteState(A=[[-0.3]], B=[[0.8]], C=[[1.5]], D=[[-0.1]], label=2),
    )
    phi = np.concatenate([np.full(20, 1), np.full(20, 2)])
    return SlsModel(states=states, switching=SwitchingSequence(phi))
