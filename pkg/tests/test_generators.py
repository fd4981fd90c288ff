import dataclasses

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from sls_realization.system import (
    Assumption,
    SlsModel,
    SwitchingSequence,
    check_assumptions,
    check_state_assumptions,
    controllability_matrix,
    mixed_switching,
    multisine,
    observability_matrix,
    random_sls,
    random_switching,
)
from sls_realization.system.assumptions import stationary_margin
from sls_realization.utils.errors import SizingError
from sls_realization.utils.stage import SegmentClass


def test_mixed_switching_covers_every_class():
    phi = mixed_switching(3)
    classes = set(phi.segment_classes(3))

    assert phi.n_steps == 109 * 3 + 26
    assert phi.labels == (1, 2, 3)
    assert {SegmentClass.LONG, SegmentClass.SHORT, SegmentClass.VERY_SHORT} <= classes
    assert SegmentClass.INFEASIBLE not in classes


def test_example_states_satisfy_assumptions(example_states):
    report = check_state_assumptions(
        example_states,
        which=[
            Assumption.STABLE_MINIMAL,
            Assumption.UNIMODAL,
            Assumption.MARKOV_DETECTABLE,
            Assumption.NONZERO_POLES,
        ],
    )

    assert report.passed, report.to_dict()


def test_example_model_assumptions(example_model):
    report = check_assumptions(example_model, which=[Assumption.MIN_DWELL])

    assert report.passed
    # The very short segment of length 7 leaves no guaranteed stationary stretch
    assert stationary_margin(example_model) == 7 - 4 * 3 - 1


def test_short_dwell_is_reported(example_states):
    phi = SwitchingSequence.from_segments([(1, 30), (2, 2), (3, 30)])
    report = check_assumptions(SlsModel(states=example_states, switching=phi), which=[Assumption.MIN_DWELL])

    assert not report.passed
    assert report.failed() == [Assumption.MIN_DWELL]
    assert "minimum dwell 2" in report[Assumption.MIN_DWELL].diagnostics[0]


def test_duplicate_state_is_not_unimodal(example_states):
    twin = dataclasses.replace(example_states[0].similar(np.diag([1.0, 2.0, -1.0])), label=2)
    report = check_state_assumptions([example_states[0], twin], which=[Assumption.UNIMODAL])

    assert not report.passed


def test_extended_matrices(example_states):
    state = example_states[2]
    obs = observability_matrix(state, 7)
    ctrl = controllability_matrix(state, 6)

    assert obs.shape == (14, 3)
    assert ctrl.shape == (3, 12)
    np.testing.assert_allclose(obs[2:4], state.C @ state.A)
    np.testing.assert_allclose(ctrl[:, 2:4], state.A @ state.B)


def test_random_sls_is_seeded():
    first = random_sls(2, 1, 1, 3, seed=11)
    second = random_sls(2, 1, 1, 3, seed=11)

    assert [state.label for state in first] == [1, 2, 3]
    for a, b in zip(first, second):
        assert_array_equal(a.stacked(), b.stacked())
    report = check_state_assumptions(
        first,
        which=[Assumption.STABLE_MINIMAL, Assumption.UNIMODAL, Assumption.NONZERO_POLES],
        unimodal_tol=0.05,
        pole_tol=0.05,
    )
    assert report.passed, report.to_dict()


def test_random_switching_respects_floor():
    phi = random_switching(650, 3, 26, seed=5, dwell_ceiling=65)

    assert phi.n_steps == 650
    assert set(phi.labels) == {1, 2, 3}
    assert min(phi.dwell) >= 26
    assert_array_equal(phi.phi, random_switching(650, 3, 26, seed=5, dwell_ceiling=65).phi)


def test_random_switching_mixed_mode():
    phi = random_switching(600, 3, 40, seed=2, mixed_order=2)

    assert phi.n_steps == 600
    assert {SegmentClass.LONG, SegmentClass.SHORT, SegmentClass.VERY_SHORT} <= set(phi.segment_classes(2))


def test_random_switching_too_short():
    with pytest.raises(SizingError, match="cannot fit"):
        random_switching(50, 3, 26)


def test_multisine():
    u = multisine(200, 2, seed=4)

    assert u.shape == (200, 2)
    assert np.all(np.std(u, axis=0) > 0.1)
    assert_array_equal(u, multisine(200, 2, seed=4))
