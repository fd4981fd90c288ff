import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from sls_realization.realization.basis import (
    BasisTransforms,
    apply_transforms,
    edge_transform,
    predict_output,
    solve_transforms,
    switch_edges,
)
from sls_realization.realization.switch import SwitchEstimate
from sls_realization.system import DiscreteState, SlsModel, generate_markov, multisine, simulate
from sls_realization.utils.errors import ConditioningError, ConnectivityError
from sls_realization.utils.metrics import vaf


@pytest.fixture(scope="module")
def transforms(example_markov, example_cluster, example_estimate):
    return solve_transforms(example_markov, example_cluster, example_estimate)


@pytest.fixture(scope="module")
def common(example_cluster, transforms):
    return apply_transforms(example_cluster, transforms)


def test_transforms_cover_every_state(transforms):
    assert sorted(transforms.pi) == [1, 2, 3]
    assert_array_equal(transforms.pi[1], np.eye(3))
    assert transforms.path[1] == ()
    # State 2 is entered from state 1 at the first switch
    assert transforms.path[2] == (47,)


def test_switch_edges(example_model, example_estimate):
    edges = switch_edges(example_estimate, example_model.n_steps, 3)

    assert edges[0] == (47, 1, 2)
    # Segments of 3n+1 and 2n+1 samples still leave n on either side
    assert all(edge.k in example_estimate.switches for edge in edges)
    assert len(edges) == len(example_estimate.switches)


def test_every_edge_agrees_with_the_tree(example_markov, example_model, example_cluster, example_estimate, transforms):
    for edge in switch_edges(example_estimate, example_model.n_steps, 3):
        g = edge_transform(example_markov, example_cluster, edge)
        assert_allclose(g @ transforms.pi[edge.pre], transforms.pi[edge.post], rtol=1e-6, atol=1e-8)


def test_common_basis_reproduces_markov(example_model, example_markov, example_estimate, common):
    estimated = SlsModel(states=common, switching=example_estimate.extended(example_model.n_steps))
    reproduced = generate_markov(estimated, band=example_markov.band)

    assert_array_equal(estimated.switching.phi, example_model.switching.phi)
    assert np.max(np.abs(reproduced.blocks - example_markov.blocks)) < 1e-7


def test_gauge_freedom(example_model, example_markov, example_cluster, example_estimate, transforms):
    rng = np.random.default_rng(4)
    G = np.eye(3) + 0.3 * rng.standard_normal((3, 3))
    phi_hat = example_estimate.extended(example_model.n_steps)

    def reproduce(pi):
        states = apply_transforms(example_cluster, BasisTransforms(pi=pi, path=transforms.path))
        return generate_markov(SlsModel(states=states, switching=phi_hat), band=example_markov.band).blocks

    base = reproduce(transforms.pi)
    common = reproduce({label: pi @ G for label, pi in transforms.pi.items()})
    assert np.max(np.abs(common - base)) < 1e-9
    # Moving one state alone breaks the parameters across its switches
    single = reproduce({label: pi @ G if label == 2 else pi for label, pi in transforms.pi.items()})
    assert np.max(np.abs(single - base)) > 1e-3


def test_common_basis_predicts_output(example_model, example_cluster, example_estimate, common):
    inputs = multisine(example_model.n_steps, 2, seed=0)
    x0 = np.zeros(3)
    y_true = simulate(example_model, x0, 1, inputs)
    phi_hat = example_estimate.extended(example_model.n_steps)

    assert np.all(vaf(y_true, predict_output(common, phi_hat, x0, inputs)) >= 99.9)
    raw = tuple(
        DiscreteState(A=quad.A, B=quad.B, C=quad.C, D=quad.D, label=label)
        for label, quad in example_cluster.representatives.items()
    )
    # Each representative alone lives in its own basis
    assert np.min(vaf(y_true, predict_output(raw, phi_hat, x0, inputs))) < 99.0


def test_ill_conditioned_edges(example_markov, example_model, example_cluster, example_estimate):
    edge = switch_edges(example_estimate, example_model.n_steps, 3)[0]

    with pytest.raises(ConditioningError, match="cond"):
        edge_transform(example_markov, example_cluster, edge, cond_limit=0.5)
    with pytest.raises(ConnectivityError, match="cannot be reached"):
        solve_transforms(example_markov, example_cluster, example_estimate, cond_limit=0.5)


def test_unreachable_states(example_markov, example_cluster, example_estimate):
    lo, hi = example_estimate.window
    constant = SwitchEstimate(
        window=(lo, hi),
        phi_hat=np.ones(hi - lo + 1, dtype=np.int64),
        provenance=("interval",) * (hi - lo + 1),
        fragments=(),
    )

    with pytest.raises(ConnectivityError, match=r"States \[2, 3\]"):
        solve_transforms(example_markov, example_cluster, constant)
