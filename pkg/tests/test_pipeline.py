import json

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from sls_realization.pipeline import (
    EstimationReport,
    build_model,
    hankel_mismatch,
    meta_run,
    noise_floor,
)
from sls_realization.realization.hankel import add_noise
from sls_realization.utils.config import config_run
from sls_realization.utils.errors import StageError, WindowError
from sls_realization.utils.stage import NoiseMode, Stage


def test_meta_run_recovers_example(example_report):
    metrics = example_report.metrics

    assert example_report.stages == ["realize", "cluster", "detect", "align"]
    assert example_report.sigma_hat == 3
    assert example_report.switches == (47, 87, 127, 143, 183, 193, 217, 233, 243, 281, 288, 310)
    assert metrics["fit_phi"] == 100.0
    assert metrics["delta_P"] < 1e-6
    assert min(metrics["vaf"]) >= 99.9
    assert metrics["eps_H_rms"] < 1e-6
    assert len(metrics["eps_H"]) == 341 - 7 + 1
    assert example_report.diagnostics == []


def test_report_model(example_model, example_report):
    estimated = example_report.estimated_model()

    assert_array_equal(estimated.switching.phi, example_model.switching.phi)
    assert [state.label for state in estimated.states] == [1, 2, 3]


def test_hankel_mismatch(example_markov, example_report):
    assert hankel_mismatch(example_markov, example_report, 183) < 1e-6
    with pytest.raises(WindowError):
        hankel_mismatch(example_markov, example_report, 5)


def test_report_serializes(example_report):
    data = json.loads(json.dumps(example_report.to_dict()))
    restored = EstimationReport.from_dict(data)

    assert restored.sigma_hat == 3
    assert restored.completed(Stage.ALIGN)
    assert restored.config["last_stage"] == "align"
    assert_array_equal(restored.phi_hat, example_report.phi_hat)
    for a, b in zip(restored.submodels, example_report.submodels):
        np.testing.assert_allclose(a.stacked(), b.stacked())
    assert_array_equal(restored.transforms.pi[2], example_report.transforms.pi[2])


def test_meta_run_stops_after_stage(example_markov, example_model):
    report = meta_run(example_markov, config_run("example", "noiseless", last_stage="cluster"), truth=example_model)

    assert report.stages == ["realize", "cluster"]
    assert report.sigma_hat == 3
    assert report.phi_hat is None
    assert report.transforms is None
    assert "fit_phi" not in report.metrics
    assert set(report.metrics) == {"label_map"}


def test_stage_failure_keeps_partial_report(example_markov):
    with pytest.raises(StageError) as info:
        meta_run(example_markov, config_run("example", "noiseless", nu=1000))

    error = info.value
    assert error.stage == Stage.CLUSTER
    assert str(error).startswith("[cluster]")
    assert error.report.completed(Stage.REALIZE)
    assert not error.report.completed(Stage.CLUSTER)
    assert error.report.realization is not None
    assert error.report.diagnostics[0].startswith("[cluster]")


def test_meta_run_with_small_noise(example_model, example_markov):
    noisy = add_noise(example_markov, NoiseMode.AMPLITUDE, 1e-7, seed=3)
    config = config_run("example", "noiseless", noise_mode="amplitude", noise_level=1e-7, calibrate=True)
    report = meta_run(noisy, config, truth=example_model)

    assert report.sigma_hat == 3
    assert report.metrics["fit_phi"] >= 95.0
    assert report.calibration["match_tol"] >= config.match_tol


def test_noise_floor(example_markov):
    bounded = add_noise(example_markov, NoiseMode.AMPLITUDE, 1e-3, seed=0)

    assert noise_floor(bounded, NoiseMode.AMPLITUDE) == pytest.approx(2.0 * np.sqrt(42.0) * 1e-3)
    assert noise_floor(example_markov, NoiseMode.SNR) == 0.0


def test_build_model():
    example = build_model(config_run("example"))
    ensemble = build_model(config_run("montecarlo"), seed=3)

    assert example.dims == (3, 2, 2, 353)
    assert ensemble.n == 2
    assert ensemble.sigma == 3
    assert ensemble.n_steps == 650
    assert ensemble.switching.min_dwell >= 26
    assert_array_equal(ensemble.switching.phi, build_model(config_run("montecarlo"), seed=3).switching.phi)


@pytest.mark.slow
def test_hankel_mismatch_shape_at_40_db(example_model, example_markov):
    noisy = add_noise(example_markov, NoiseMode.SNR, 40.0, seed=0)
    report = meta_run(noisy, config_run("paper", "noisy"), truth=example_model)
    eps_H = np.asarray(report.metrics["eps_H"])
    lo, hi = report.window
    n = example_model.n
    switches = np.asarray(example_model.switching.switches)

    def near_switch(k):
        return bool(np.any((switches > k - 2 * n) & (switches <= k + 2 * n)))

    # Flat on every stretch whose Hankel matrix sees a single segment
    stretch = []
    for k in range(lo, hi + 2):
        if k <= hi and not near_switch(k):
            stretch.append(eps_H[k - lo])
            continue
        if len(stretch) > 1:
            assert np.std(stretch) < 0.5 * np.mean(stretch)
        stretch = []

    assert near_switch(lo + int(np.argmax(eps_H)))
