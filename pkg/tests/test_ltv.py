import numpy as np
import pytest
from numpy.testing import assert_allclose

from sls_realization.realization.hankel import add_noise, state_matrix_from_controllability
from sls_realization.realization.ltv import realize_at, realize_range, reconstruct_markov
from sls_realization.system import markov
from sls_realization.utils.errors import WindowError
from sls_realization.utils.linalg import feature_M


def test_realization_covers_window(example_realization):
    assert example_realization.window == (7, 341)
    assert example_realization.computed_at == tuple(range(7, 342))


@pytest.mark.parametrize("k, l", [(60, 50), (47, 40), (47, 46), (200, 188), (100, 100), (341, 330)])
def test_reconstruct_markov(example_model, example_realization, k, l):
    assert_allclose(reconstruct_markov(example_realization, k, l), markov(example_model, k, l), atol=1e-8)


def test_state_matrix_similar_inside_segment(example_model, example_realization):
    for k, state in [(20, 0), (60, 1), (100, 2)]:
        a_hat = example_realization.quad(k).A
        a_true = example_model.states[state].A
        assert feature_M(a_hat) == pytest.approx(feature_M(a_true), rel=1e-8)
        assert_allclose(np.poly(a_hat), np.poly(a_true), atol=1e-8)


def test_realize_at_matches_range(example_markov, example_realization):
    quad = realize_at(example_markov, 120)

    assert_allclose(quad.stacked(), example_realization.quad(120).stacked(), atol=1e-12)
    assert_allclose(quad.D, example_markov.block(120, 120))


def test_rebased_keeps_markov_parameters(example_realization):
    T = np.array([[2.0, 0.1, 0.0], [0.0, 1.0, -0.4], [0.3, 0.0, 0.5]])
    rebased = example_realization.rebased(T)

    for k, l in [(90, 80), (150, 140)]:
        assert_allclose(reconstruct_markov(rebased, k, l), reconstruct_markov(example_realization, k, l), atol=1e-10)


def test_window_errors(example_markov, example_realization):
    with pytest.raises(WindowError, match="outside the realization window"):
        realize_at(example_markov, 6)
    with pytest.raises(WindowError, match="outside the realization window"):
        realize_range(example_markov, anchors=[340, 342])
    with pytest.raises(WindowError, match="l ≤ k"):
        reconstruct_markov(example_realization, 10, 11)
    with pytest.raises(WindowError, match="Missing"):
        reconstruct_markov(realize_range(example_markov, anchors=[20, 22]), 22, 20)


def test_threaded_realization(example_markov, example_realization):
    threaded = realize_range(example_markov, anchors=range(40, 52), workers=2)

    assert threaded.computed_at == tuple(range(40, 52))
    for k in threaded.computed_at:
        assert_allclose(threaded.quad(k).stacked(), example_realization.quad(k).stacked(), atol=1e-12)


def test_reconstruction_error_is_linear_in_noise(example_model, example_markov):
    # Interiors of the first segments of states 1 and 2, where σ_min > 0.35
    anchors = list(range(15, 31)) + list(range(55, 71))
    levels = np.array([1e-2, 1e-3, 1e-4])
    errors = []
    for level in levels:
        noisy = add_noise(example_markov, "amplitude", level, seed=7)
        real = realize_range(noisy, anchors=anchors)
        errors.append(
            max(
                np.linalg.norm(reconstruct_markov(real, k, k - 5) - markov(example_model, k, k - 5))
                for k in list(range(20, 31)) + list(range(60, 71))
            )
        )

    assert errors[0] > errors[1] > errors[2]
    slope = np.polyfit(np.log10(levels), np.log10(errors), 1)[0]
    assert slope >= 0.9


@pytest.mark.parametrize("k", [20, 44, 47, 130])
def test_controllability_shift_agrees(example_realization, k):
    anchor = example_realization.anchor(k)

    assert_allclose(state_matrix_from_controllability(anchor.ctrl, anchor.ctrl_prev, 2), anchor.quad.A, atol=1e-8)
