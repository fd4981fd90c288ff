import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from sls_realization.realization.hankel import (
    add_noise,
    advance,
    build,
    factorize,
    hankel_window,
    lti_hankel,
    sigma_min_table,
)
from sls_realization.system import generate_markov
from sls_realization.utils.errors import RankDeficiencyError, WindowError
from sls_realization.utils.stage import NoiseMode


def test_build_blocks(example_markov):
    hankel = build(example_markov, 7, 6, 20)

    assert hankel.data.shape == (14, 12)
    for s, t in [(1, 1), (3, 2), (7, 6), (4, 5)]:
        assert_array_equal(hankel.block(s, t), example_markov.block(20 + s - 1, 20 - t))


def test_build_inside_segment_is_lti(example_model, example_markov):
    # Anchors 7..40 only touch samples of the first segment
    assert_allclose(build(example_markov, 7, 6, 20).data, lti_hankel(example_model.states[0], 7, 6), atol=1e-12)


def test_advance_matches_build(example_markov):
    hankel = build(example_markov, 7, 6, 44)
    for _ in range(6):
        hankel = advance(hankel, example_markov)
        assert_array_equal(hankel.data, build(example_markov, 7, 6, hankel.k).data)
    assert hankel.k == 50


def test_build_outside_window(example_markov):
    lo, hi = hankel_window(example_markov, 7, 6)

    assert (lo, hi) == (7, 353 - 6)
    with pytest.raises(WindowError, match="outside"):
        build(example_markov, 7, 6, lo - 1)
    with pytest.raises(WindowError, match="outside"):
        build(example_markov, 7, 6, hi + 1)
    with pytest.raises(WindowError, match="band"):
        build(example_markov, 8, 7, 20)


def test_factorize_reproduces_hankel(example_markov):
    hankel = build(example_markov, 7, 6, 47)
    pair = factorize(hankel, 3)

    assert pair.obs.shape == (14, 3)
    assert pair.ctrl.shape == (3, 12)
    assert np.linalg.norm(pair.product() - hankel.data) <= 1e-8 * np.linalg.norm(hankel.data)
    obs_gram, ctrl_gram = pair.gramians()
    # The balanced split gives equal Gramians
    assert_allclose(obs_gram, ctrl_gram, atol=1e-10)


def test_factorize_rank_deficient(scalar_model):
    markov = generate_markov(scalar_model)
    hankel = build(markov, 3, 2, 5)

    with pytest.raises(RankDeficiencyError, match="rank below n=2"):
        factorize(hankel, 2)


def test_sigma_min_table(example_states):
    table = sigma_min_table(example_states)

    assert set(table) == {"7x6", "4x3"}
    # The (2n+1, 2n) sizing reproduces the published values, the (n+1, n) one does not
    assert_allclose(table["7x6"], [0.4063, 0.3560, 0.0180], atol=1e-3)
    assert not np.allclose(table["4x3"], [0.4063, 0.3560, 0.0180], atol=1e-3)
    assert_allclose(table["4x3"], [0.3695, 0.2629, 0.0131], atol=1e-3)
    assert int(np.argmin(table["7x6"])) == 2


def test_add_noise_none_is_identity(example_markov):
    assert add_noise(example_markov, NoiseMode.NONE, 10.0) is example_markov
    assert add_noise(example_markov, "amplitude", 0.0) is example_markov


def test_add_noise_amplitude_bound(example_markov):
    noisy = add_noise(example_markov, "amplitude", 1e-3, seed=0)
    valid = example_markov.valid_mask()
    norms = np.linalg.norm(noisy.blocks - example_markov.blocks, axis=(2, 3))

    assert noisy.noise_bound == pytest.approx(1e-3)
    assert not noisy.is_exact
    assert np.all(norms[valid] <= 1e-3 + 1e-15)
    assert np.all(norms[~valid] == 0.0)


def test_add_noise_snr(example_markov):
    noisy = add_noise(example_markov, NoiseMode.SNR, 40.0, seed=1)
    valid = example_markov.valid_mask()
    signal = np.mean(example_markov.blocks[valid] ** 2)
    noise = np.mean((noisy.blocks - example_markov.blocks)[valid] ** 2)

    assert 10.0 * np.log10(signal / noise) == pytest.approx(40.0, abs=0.5)
    assert_array_equal(noisy.blocks, add_noise(example_markov, NoiseMode.SNR, 40.0, seed=1).blocks)


def test_add_noise_rejects_negative_bound(example_markov):
    with pytest.raises(ValueError, match="nonnegative"):
        add_noise(example_markov, NoiseMode.AMPLITUDE, -1.0)
