import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from sls_realization.realization.cluster import cluster_states, label_runs
from sls_realization.realization.switch import (
    SwitchEstimate,
    SwitchFragment,
    assemble_phi,
    backward_correction,
    correction_deviation,
    detect_signature,
    detect_switches,
    extend_phi,
    forward_correction,
    hankel_signature,
    match_backward,
    match_forward,
)
from sls_realization.utils.errors import ConflictError, DetectionError
from sls_realization.utils.stage import Detector, Direction

TRUE_SWITCHES = (47, 87, 127, 143, 183, 193, 217, 233, 243, 281, 288, 310)


def test_detect_switches_recovers_phi(example_model, example_estimate):
    lo, hi = example_estimate.window

    assert example_estimate.is_complete
    assert example_estimate.switches == TRUE_SWITCHES
    assert_array_equal(example_estimate.phi_hat, example_model.switching.phi[lo - 1 : hi])


def test_every_detector_contributes(example_estimate):
    detectors = {provenance.split("/")[0] for provenance in example_estimate.provenance}

    assert detectors == {"interval", "markov", "correction", "signature"}
    sources = example_estimate.sources()
    assert sources[47].detector == Detector.MARKOV
    assert sources[233].detector == Detector.CORRECTION
    assert sources[193].detector == Detector.MARKOV
    assert sources[243].detector == Detector.MARKOV


def test_detection_ignores_the_realization_basis(example_markov, example_realization, example_stationary, example_estimate):
    q, _ = np.linalg.qr(np.random.default_rng(0).standard_normal((3, 3)))
    T = q @ np.diag([1.0, 2.0, 0.5])
    rebased = example_realization.rebased(T)
    cluster = cluster_states(rebased, example_stationary)
    runs = label_runs(rebased, example_stationary, cluster)

    estimate = detect_switches(rebased, example_markov, example_stationary, cluster, runs)

    assert_array_equal(estimate.phi_hat, example_estimate.phi_hat)
    assert estimate.provenance == example_estimate.provenance

    def fired(fragments):
        return {(f.detector, f.direction, f.switch, f.steps) for f in fragments}

    assert fired(estimate.fragments) == fired(example_estimate.fragments)


def test_detection_step_bounds(example_estimate):
    for fragment in example_estimate.fragments:
        if fragment.steps is None or fragment.detector == Detector.SIGNATURE:
            continue
        bound = 2 * 3 + 1 if fragment.direction == Direction.FORWARD else 2 * 3
        assert 0 <= fragment.steps <= bound, fragment


def test_match_forward(example_markov, example_states):
    assert match_forward(example_markov, example_states[0], 46).same
    failed = match_forward(example_markov, example_states[0], 47)
    assert not failed.same
    # Past the switch the least-squares output matrix is the one of the next state
    assert_allclose(failed.estimate, example_states[1].C, atol=1e-10)


def test_match_backward(example_markov, example_states):
    assert match_backward(example_markov, example_states[1], 47).same
    failed = match_backward(example_markov, example_states[1], 46)
    assert not failed.same
    assert_allclose(failed.D, example_states[0].D)


def test_correction_operators_inside_interval(example_realization):
    assert_allclose(forward_correction(example_realization, 20), np.eye(3), atol=1e-10)
    assert_allclose(backward_correction(example_realization, 20), np.eye(3), atol=1e-10)
    assert correction_deviation(example_realization, 136, Direction.FORWARD) > 1e-6


def test_hankel_signature(example_states):
    signature = hankel_signature(example_states[2])

    assert signature.shape == (8, 6)
    assert_allclose(signature[2:4, 2:4], example_states[2].C @ example_states[2].A @ example_states[2].A @ example_states[2].B)


def test_signature_needs_a_boundary(example_markov, example_cluster):
    empty = SwitchEstimate(window=(7, 341), phi_hat=np.zeros(335, dtype=np.int64), provenance=("",) * 335, fragments=())

    with pytest.raises(DetectionError, match="whole window"):
        detect_signature(example_markov, example_cluster, empty)


def test_conflicting_detectors(example_stationary, example_cluster):
    fragment = SwitchFragment(Detector.MARKOV, Direction.FORWARD, 2, 30, 45)

    with pytest.raises(ConflictError, match="k=30"):
        assemble_phi([fragment], example_stationary, example_cluster)


def test_same_detector_keeps_forward(example_stationary, example_cluster):
    fragments = [
        SwitchFragment(Detector.CORRECTION, Direction.BACKWARD, 2, 44, 46, 44, 1),
        SwitchFragment(Detector.CORRECTION, Direction.FORWARD, 1, 40, 45, 46, 1),
    ]
    estimate = assemble_phi(fragments, example_stationary, example_cluster)

    assert [estimate.label_at(k) for k in (40, 44, 45, 46, 47)] == [1, 1, 1, 2, 0]
    assert estimate.provenance[44 - 7] == "correction/forward"
    assert not estimate.is_complete


def test_extend_phi():
    phi = extend_phi(np.array([0, 2, 2, 0, 1, 0]), (3, 8), 10)

    assert_array_equal(phi.phi, [2, 2, 2, 2, 2, 2, 1, 1, 1, 1])
    with pytest.raises(DetectionError):
        extend_phi(np.zeros(4, dtype=int), (3, 6), 8)
