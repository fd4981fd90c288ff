import json
import os

import pandas as pd
import pytest

from sls_realization.cli import EXIT_FORMAT, EXIT_OK, EXIT_STAGE, EXIT_USAGE, main


@pytest.fixture(scope="module")
def simulated(tmp_path_factory):
    directory = str(tmp_path_factory.mktemp("simulated"))
    assert main(["-q", "simulate", "--preset", "example", "--output-dir", directory]) == EXIT_OK
    return directory


def test_simulate_writes_inputs(simulated):
    for name in ("model.json", "markov.csv", "config.yaml"):
        assert os.path.isfile(os.path.join(simulated, name))
    with open(os.path.join(simulated, "markov.csv")) as f:
        header = json.loads(f.readline())
    assert header["band"] == 12
    assert header["N"] == 353


def test_meta_writes_artifacts(simulated, tmp_path):
    out = str(tmp_path)
    code = main(
        [
            "-q",
            "meta",
            "--preset",
            "paper",
            "--markov",
            os.path.join(simulated, "markov.csv"),
            "--truth",
            os.path.join(simulated, "model.json"),
            "--output-dir",
            out,
        ]
    )

    assert code == EXIT_OK
    with open(os.path.join(out, "report.json")) as f:
        report = json.load(f)
    assert report["metrics"]["fit_phi"] == 100.0
    assert report["sigma_hat"] == 3
    for name in ("realization.json", "stationary.csv", "clusters.csv", "phi_hat.csv", "hankel_mismatch.csv"):
        assert os.path.isfile(os.path.join(out, name))
    phi = pd.read_csv(os.path.join(out, "phi_hat.csv"))
    assert (phi["phi"] == phi["phi_hat"]).all()


def test_realize_stops_early(simulated, tmp_path):
    out = str(tmp_path)
    code = main(["-q", "realize", "--markov", os.path.join(simulated, "markov.csv"), "--output-dir", out])

    assert code == EXIT_OK
    assert os.path.isfile(os.path.join(out, "realization.json"))
    assert not os.path.exists(os.path.join(out, "clusters.csv"))


def test_stage_failure_exit_code(simulated, tmp_path):
    out = str(tmp_path)
    code = main(["-q", "cluster", "--markov", os.path.join(simulated, "markov.csv"), "--nu", "1000", "--output-dir", out])

    assert code == EXIT_STAGE
    with open(os.path.join(out, "report.json")) as f:
        report = json.load(f)
    assert report["stages"] == ["realize"]
    assert report["diagnostics"][0].startswith("[cluster]")


def test_malformed_markov_file(tmp_path):
    markov = tmp_path / "markov.csv"
    markov.write_text("not a header\n")

    assert main(["-q", "meta", "--markov", str(markov), "--output-dir", str(tmp_path)]) == EXIT_FORMAT


def test_usage_errors(tmp_path):
    with pytest.raises(SystemExit) as info:
        main(["-q", "meta"])
    assert info.value.code == EXIT_USAGE
    assert main(["-q", "simulate", "--preset", "nonexistent", "--output-dir", str(tmp_path)]) == EXIT_USAGE


def test_config_file(simulated, tmp_path):
    config = tmp_path / "config.yaml"
    config.write_text("epsilon: 0.1\n")

    code = main(["-q", "realize", "--markov", os.path.join(simulated, "markov.csv"), "--config", str(config)])
    assert code == EXIT_USAGE
