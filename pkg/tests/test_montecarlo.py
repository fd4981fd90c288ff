import os
from types import SimpleNamespace

import numpy as np
import pandas as pd
import pytest
from pandas.testing import assert_frame_equal

from sls_realization.pipeline import build_model, snr_sweep
from sls_realization.utils import montecarlo
from sls_realization.utils.config import config_run
from sls_realization.utils.montecarlo import RUN_COLUMNS, TABLE_COLUMNS, monte_carlo, summarize


def test_summarize_skips_failed_runs():
    runs = pd.DataFrame(
        [
            {"run": 0, "snr": 40.0, "delta_P": 0.1, "fit_phi": 100.0, "rms_eps_H": 0.01, "sigma_hat": 3, "failed": False, "error": ""},
            {"run": 1, "snr": 40.0, "delta_P": 0.3, "fit_phi": 90.0, "rms_eps_H": 0.03, "sigma_hat": 3, "failed": False, "error": ""},
            {"run": 2, "snr": 40.0, "delta_P": np.nan, "fit_phi": np.nan, "rms_eps_H": np.nan, "sigma_hat": np.nan, "failed": True, "error": "x"},
        ],
        columns=RUN_COLUMNS,
    )
    table = summarize(runs)

    assert list(table.columns) == TABLE_COLUMNS
    row = table.iloc[0]
    assert row["delta_P"] == pytest.approx(0.2)
    assert row["fit_phi"] == pytest.approx(95.0)
    assert row["runs"] == 3
    assert row["failed"] == 1


@pytest.mark.slow
def test_monte_carlo_is_seeded():
    config = config_run("montecarlo", runs=2, snrs=(50.0,))
    runs, table = monte_carlo(config, seed=1, workers=1)

    assert list(runs.columns) == RUN_COLUMNS
    assert len(runs) == 2
    assert table["runs"].tolist() == [2]
    again, _ = monte_carlo(config, seed=1, workers=1)
    assert_frame_equal(runs, again)


@pytest.mark.slow
def test_snr_sweep():
    model = build_model(config_run("example"))
    frame = snr_sweep(model, [80.0, 60.0], config_run("example"), seed=0)

    assert frame["snr"].tolist() == [80.0, 60.0]
    assert list(frame.columns) == ["snr", "eps_H_rms", "fit_phi", "delta_P", "sigma_hat", "failed"]
    assert not frame["failed"].iloc[0]
    assert frame["fit_phi"].iloc[0] >= 95.0
    assert frame.loc[~frame["failed"], "fit_phi"].notna().all()


def test_misclustered_runs_count_in_the_averages(monkeypatch, example_model):
    report = SimpleNamespace(
        metrics={"fit_phi": 97.0, "eps_H_rms": 0.01},
        sigma_hat=4,
        diagnostics=["[metrics] σ̂ = 4 differs from σ = 3; δ_P skipped"],
    )
    monkeypatch.setattr(montecarlo, "build_model", lambda config, seed=None: example_model)
    monkeypatch.setattr(montecarlo, "meta_run", lambda markov, config, truth=None: report)

    runs, table = monte_carlo(config_run("montecarlo", runs=2, snrs=(40.0,)), seed=0, workers=1)

    assert not runs["failed"].any()
    assert runs["sigma_hat"].tolist() == [4, 4]
    assert runs["delta_P"].isna().all()
    assert runs["error"].str.contains("δ_P skipped").all()
    row = table.iloc[0]
    assert row["fit_phi"] == pytest.approx(97.0)
    assert row["rms_eps_H"] == pytest.approx(0.01)
    assert row["failed"] == 0
    assert np.isnan(row["delta_P"])


@pytest.mark.slow
def test_monte_carlo_table():
    config = config_run("montecarlo", snrs=(50.0, 20.0))
    _, table = monte_carlo(config, seed=0, workers=min(4, os.cpu_count() or 1))
    table = table.set_index("snr")

    assert table.loc[50.0, "runs"] == 50
    assert table.loc[50.0, "fit_phi"] >= 99.5
    assert 0.004 <= table.loc[50.0, "delta_P"] <= 0.03
    assert table.loc[20.0, "fit_phi"] >= 90.0
