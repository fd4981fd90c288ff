import pytest

from sls_realization.utils.config import NU, RunConfig, config_run
from sls_realization.utils.stage import NoiseMode, Stage


def test_paper_preset():
    config = config_run("paper")

    assert (config.n, config.m, config.p, config.sigma) == (3, 2, 2, 3)
    assert config.n_steps == 109 * 3 + 26
    assert config.model == "example"
    assert (config.epsilon_Z, config.nu, config.radius, config.min_points) == (1e-4, 6, 1e-5, 1)
    assert config.support == NU * 3
    assert not config.is_noisy
    assert config_run("example") == config


def test_experiments():
    noisy = config_run("example", "noisy")
    noiseless = config_run("montecarlo", "noiseless")

    assert noisy.noise_mode == NoiseMode.SNR
    assert noisy.noise_level == 40.0
    assert noisy.calibrate
    assert noiseless.noise_mode == NoiseMode.NONE
    assert not noiseless.calibrate
    assert noiseless.n_steps == 650


def test_unknown_names():
    with pytest.raises(ValueError, match="Unknown preset"):
        config_run("nonexistent")
    with pytest.raises(ValueError, match="Unknown experiment"):
        config_run("example", "loud")


def test_overrides_and_coercion():
    config = config_run("example", epsilon_Z=1e-3, last_stage="detect", noise_mode="snr", min_support=4)

    assert config.epsilon_Z == 1e-3
    assert config.last_stage == Stage.DETECT
    assert config.stages == [Stage.REALIZE, Stage.CLUSTER, Stage.DETECT]
    assert config.noise_mode == NoiseMode.SNR
    assert config.support == 4


@pytest.mark.parametrize("name", ["epsilon_Z", "radius", "match_tol"])
def test_tolerances_must_be_positive(name):
    with pytest.raises(ValueError, match=f"Tolerance {name} must be positive"):
        RunConfig(**{name: 0.0})


def test_invalid_fields():
    with pytest.raises(ValueError, match="nu must be at least 1"):
        RunConfig(nu=0)
    with pytest.raises(ValueError, match="Unknown model source"):
        RunConfig(model="toy")


def test_from_dict_rejects_unknown_keys():
    with pytest.raises(ValueError, match="Unknown configuration keys"):
        RunConfig.from_dict({"n": 3, "epsilon": 1e-3})


def test_yaml_roundtrip(tmp_path):
    config = config_run("montecarlo", snrs=(30.0, 20.0), last_stage="align")
    filename = str(tmp_path / "config.yaml")
    config.to_yaml(filename)
    restored = RunConfig.from_yaml(filename)

    assert restored == config
    assert restored.snrs == (30.0, 20.0)
