from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from os import environ, path
from typing import Any, Dict, Optional, Tuple

import yaml

from sls_realization.utils.linalg import RANK_TOL
from sls_realization.utils.stage import NoiseMode, Stage

DIR_OUTPUT: str = environ.get("SLS_OUTPUT_DIR", default=path.join(".", "sls_output"))
PRESET: str = environ.get("SLS_PRESET", default="paper")
LOG_LEVEL: str = environ.get("SLS_LOG_LEVEL", default="INFO").upper()
WORKERS: int = int(environ.get("SLS_WORKERS", default="1"))

## Stationary set and clustering
EPSILON_Z: float = 1e-4
NU: int = 6
CLUSTER_RADIUS: float = 1e-5
CLUSTER_MIN_POINTS: int = 1

## Switch detection
DETECTION_TOL: float = 1e-6
MATCH_TOL: float = 1e-6
AMBIGUITY_TOL: float = 1e-9
CALIBRATION_FACTOR: float = 10.0

## Basis alignment
COND_LIMIT: float = 1e8

MODEL_SOURCES = ("example", "random")
SWITCHING_SOURCES = ("mixed", "random")


@dataclass(frozen=True)
class RunConfig:
    """
    Everything a run of the meta-algorithm depends on.

    `epsilon_Z` is relative to max_k ‖H(k)‖_F unless `calibrate` replaces it by a noise-aware
    absolute threshold. `min_support` is the interval length below which a cluster is merged
    away in noisy runs; ν·n when left unset.
    """

    ## Dimensions
    n: int = 3
    m: int = 2
    p: int = 2
    sigma: int = 3
    n_steps: int = 1000

    ## Model sources
    model: str = "example"
    switching: str = "mixed"
    dwell_floor: Optional[int] = None

    ## Tolerances
    epsilon_Z: float = EPSILON_Z
    rank_tol: float = RANK_TOL
    detection_tol: float = DETECTION_TOL
    match_tol: float = MATCH_TOL
    ambiguity_tol: float = AMBIGUITY_TOL
    cond_limit: float = COND_LIMIT
    calibrate: bool = False

    ## Clustering
    nu: int = NU
    radius: float = CLUSTER_RADIUS
    min_points: int = CLUSTER_MIN_POINTS
    min_support: Optional[int] = None

    ## Noise
    noise_mode: NoiseMode = NoiseMode.NONE
    noise_level: float = 0.0

    ## Run
    seed: Optional[int] = 0
    last_stage: Stage = Stage.ALIGN
    output_dir: str = DIR_OUTPUT
    workers: int = WORKERS

    ## Monte Carlo
    runs: int = 50
    snrs: Tuple[float, ...] = field(default=(50.0, 40.0, 30.0, 20.0))

    def __post_init__(self):
        if isinstance(self.noise_mode, str):
            object.__setattr__(self, "noise_mode", NoiseMode.from_str(self.noise_mode))
        if isinstance(self.last_stage, str):
            object.__setattr__(self, "last_stage", Stage.from_str(self.last_stage))
        object.__setattr__(self, "snrs", tuple(float(snr) for snr in self.snrs))

        for name in ("n", "m", "p", "sigma", "n_steps", "nu", "min_points", "workers", "runs"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1, got {getattr(self, name)}")
        for name in (
            "epsilon_Z",
            "rank_tol",
            "detection_tol",
            "match_tol",
            "ambiguity_tol",
            "cond_limit",
            "radius",
        ):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"Tolerance {name} must be positive, got {getattr(self, name)}")
        if self.model not in MODEL_SOURCES:
            raise ValueError(f"Unknown model source: {self.model}")
        if self.switching not in SWITCHING_SOURCES:
            raise ValueError(f"Unknown switching source: {self.switching}")
        if self.min_support is not None and self.min_support < 0:
            raise ValueError(f"min_support must be nonnegative, got {self.min_support}")
        if self.noise_mode.is_amplitude() and self.noise_level < 0.0:
            raise ValueError(f"Noise bound must be nonnegative, got {self.noise_level}")

    @property
    def is_noisy(self) -> bool:
        return not self.noise_mode.is_none()

    @property
    def support(self) -> int:
        return self.min_support if self.min_support is not None else self.nu * self.n

    @property
    def stages(self):
        return Stage.stages_until(self.last_stage)

    def update(self, **overrides) -> RunConfig:
        return dataclasses.replace(self, **overrides)

    def to_dict(self) -> Dict[str, Any]:
        data = dataclasses.asdict(self)
        data["noise_mode"] = self.noise_mode.to_str()
        data["last_stage"] = self.last_stage.to_str()
        data["snrs"] = list(self.snrs)
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> RunConfig:
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"Unknown configuration keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_yaml(cls, filename: str) -> RunConfig:
        with open(filename, "r") as f:
            data = yaml.safe_load(f) or {}
        return cls.from_dict(data)

    def to_yaml(self, filename: str):
        with open(filename, "w") as f:
            yaml.safe_dump(self.to_dict(), f, sort_keys=False)


def config_run(
    preset: Optional[str] = None, experiment: Optional[str] = None, **overrides
) -> RunConfig:
    """
    Args:
        preset: "paper" (three-state MIMO example, alias "example"), "montecarlo" (random SISO
                ensemble) or "default"; `PRESET` when None.
        experiment: None, "noiseless" or "noisy" (40 dB SNR with self-calibrated tolerances).
        overrides: Field values applied last.

    Returns:
        The run configuration.
    """

    preset = PRESET if preset is None else preset
    if preset in ("paper", "example"):
        config = RunConfig(
            n=3, m=2, p=2, sigma=3, n_steps=109 * 3 + 26, model="example", switching="mixed",
            epsilon_Z=EPSILON_Z, nu=NU, radius=CLUSTER_RADIUS, min_points=CLUSTER_MIN_POINTS,
        )
    elif preset == "montecarlo":
        config = RunConfig(
            n=2, m=1, p=1, sigma=3, n_steps=650, model="random", switching="random",
            dwell_floor=12 * 2 + 2, runs=50, snrs=(50.0, 40.0, 30.0, 20.0),
            noise_mode=NoiseMode.SNR, noise_level=50.0, calibrate=True,
        )
    elif preset == "default":
        config = RunConfig()
    else:
        raise ValueError(f"Unknown preset: {preset}")

    if experiment is None:
        pass
    elif experiment == "noiseless":
        config = config.update(noise_mode=NoiseMode.NONE, noise_level=0.0, calibrate=False)
    elif experiment == "noisy":
        config = config.update(noise_mode=NoiseMode.SNR, noise_level=40.0, calibrate=True)
    else:
        raise ValueError(f"Unknown experiment: {experiment}")

    return config.update(**overrides) if overrides else config
