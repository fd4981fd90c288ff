"""
The four-stage meta-algorithm: realize, cluster, detect, align.

Each stage consumes only the outputs of earlier ones. A failing stage raises `StageError` carrying
the partial `EstimationReport`.
"""

import contextlib
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from sls_realization.realization.basis import (
    BasisTransforms,
    apply_transforms,
    predict_output,
    solve_transforms,
)
from sls_realization.realization.cluster import (
    ClusterResult,
    StationarySet,
    cluster_states,
    label_runs,
    recluster,
    stationary_set,
    within_spread,
)
from sls_realization.realization.hankel import add_noise, build
from sls_realization.realization.ltv import LtvRealization, realize_range
from sls_realization.realization.switch import (
    SwitchEstimate,
    detect_switches,
    extend_phi,
    stationary_deviations,
    stationary_residuals,
)
from sls_realization.system.generators import (
    SeedLike,
    make_rng,
    mixed_switching,
    multisine,
    random_sls,
    random_switching,
    three_state_example,
)
from sls_realization.system.sls_model import (
    DiscreteState,
    MarkovSequence,
    SlsModel,
    SwitchingSequence,
    generate_markov,
    simulate,
)
from sls_realization.utils.config import CALIBRATION_FACTOR, RunConfig
from sls_realization.utils.errors import MetricError, SlsError, StageError, WindowError
from sls_realization.utils.linalg import feature_M
from sls_realization.utils.metrics import align_gauge, delta_P, fit_phi, match_labels, relabel, rms, vaf
from sls_realization.utils.stage import NoiseMode, Stage

logger = logging.getLogger(__name__)

__all__ = [
    "EstimationReport",
    "meta_run",
    "evaluate",
    "hankel_mismatch",
    "hankel_mismatch_series",
    "snr_sweep",
    "align_gauge",
    "build_model",
    "noise_floor",
]


@dataclass(eq=False)
class EstimationReport:
    n: int
    n_steps: int
    window: Tuple[int, int]
    config: Dict[str, Any] = field(default_factory=dict)
    seed: Optional[int] = None
    stages: List[str] = field(default_factory=list)
    calibration: Dict[str, float] = field(default_factory=dict)
    sigma_hat: Optional[int] = None
    ## Clustered representatives in their own bases
    representatives: Tuple[DiscreteState, ...] = ()
    ## Common-basis submodels, the representatives until alignment has run
    submodels: Tuple[DiscreteState, ...] = ()
    ## φ̂ over the window, 0 where unassigned
    phi_hat: Optional[np.ndarray] = None
    switches: Tuple[int, ...] = ()
    transforms: Optional[BasisTransforms] = None
    metrics: Dict[str, Any] = field(default_factory=dict)
    diagnostics: List[str] = field(default_factory=list)

    ## Stage artifacts, kept in memory only
    realization: Optional[LtvRealization] = field(default=None, repr=False)
    stationary: Optional[StationarySet] = field(default=None, repr=False)
    cluster: Optional[ClusterResult] = field(default=None, repr=False)
    estimate: Optional[SwitchEstimate] = field(default=None, repr=False)

    def completed(self, stage: Stage) -> bool:
        return stage.to_str() in self.stages

    def phi_sequence(self) -> SwitchingSequence:
        """
        φ̂ on [1, N], continued constantly outside the window and across unassigned indices.
        """

        if self.phi_hat is None:
            raise SlsError("The report carries no switching estimate")
        return extend_phi(self.phi_hat, self.window, self.n_steps)

    def estimated_model(self) -> SlsModel:
        if not self.submodels:
            raise SlsError("The report carries no submodels")
        return SlsModel(states=self.submodels, switching=self.phi_sequence())

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n": self.n,
            "n_steps": self.n_steps,
            "window": list(self.window),
            "config": self.config,
            "seed": self.seed,
            "stages": list(self.stages),
            "calibration": dict(self.calibration),
            "sigma_hat": self.sigma_hat,
            "representatives": [state.to_dict() for state in self.representatives],
            "submodels": [state.to_dict() for state in self.submodels],
            "phi_hat": None if self.phi_hat is None else [int(label) for label in self.phi_hat],
            "switches": list(self.switches),
            "transforms": None if self.transforms is None else self.transforms.to_dict(),
            "metrics": self.metrics,
            "diagnostics": list(self.diagnostics),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "EstimationReport":
        return cls(
            n=int(data["n"]),
            n_steps=int(data["n_steps"]),
            window=tuple(data["window"]),
            config=data.get("config", {}),
            seed=data.get("seed"),
            stages=list(data.get("stages", [])),
            calibration=dict(data.get("calibration", {})),
            sigma_hat=data.get("sigma_hat"),
            representatives=tuple(DiscreteState.from_dict(s) for s in data.get("representatives", [])),
            submodels=tuple(DiscreteState.from_dict(s) for s in data.get("submodels", [])),
            phi_hat=None if data.get("phi_hat") is None else np.asarray(data["phi_hat"], dtype=np.int64),
            switches=tuple(data.get("switches", [])),
            transforms=None
            if data.get("transforms") is None
            else BasisTransforms.from_dict(data["transforms"]),
            metrics=data.get("metrics", {}),
            diagnostics=list(data.get("diagnostics", [])),
        )


@contextlib.contextmanager
def _stage(report: EstimationReport, stage: Stage):
    logger.info("Stage %s", stage.to_str())
    try:
        yield
    except SlsError as e:
        report.diagnostics.append(f"[{stage.to_str()}] {e}")
        raise StageError(stage, e, report) from e
    report.stages.append(stage.to_str())


def noise_floor(markov: MarkovSequence, mode: NoiseMode) -> float:
    """
    Expected size of ‖δ_H(k)‖_F caused by noise alone: 2·sqrt(qr)·ε for blocks bounded by ε, and
    1.5·sqrt(2·q·r·p·m)·σ_e for i.i.d. entries of standard deviation σ_e.
    """

    n = markov.order
    q, r = 2 * n + 1, 2 * n
    if mode.is_amplitude():
        return 2.0 * np.sqrt(q * r) * markov.noise_bound
    return 1.5 * np.sqrt(2.0 * q * r * markov.p * markov.m) * markov.noise_std


def _calibrated(default: float, values: np.ndarray) -> float:
    if values.size == 0:
        return default
    return max(default, CALIBRATION_FACTOR * float(np.median(values)))


def meta_run(
    markov: MarkovSequence,
    config: Optional[RunConfig] = None,
    truth: Optional[SlsModel] = None,
    inputs: Optional[np.ndarray] = None,
) -> EstimationReport:
    """
    Run the meta-algorithm up to `config.last_stage`.

    With `config.calibrate` and noisy Markov parameters, ε_Z is raised to the noise floor of
    ‖δ_H‖_F, the clustering radius to 3× the pooled within-interval feature spread, short clusters
    are merged away and the detection tolerances are set to 10× their median over the stationary
    runs.

    Args:
        markov: Markov parameters.
        config: Run configuration, `RunConfig()` by default.
        truth: Ground-truth model; when given, the report carries the evaluation metrics.
        inputs: Excitation for the output-prediction metric, a multi-sine by default.

    Returns:
        The estimation report.

    Raises:
        StageError: Wrapping the first failing stage, with the partial report attached.
    """

    config = RunConfig() if config is None else config
    noisy = config.calibrate and not markov.is_exact
    report = EstimationReport(
        n=markov.order,
        n_steps=markov.n_steps,
        window=markov.window,
        config=config.to_dict(),
        seed=config.seed,
    )
    stages = config.stages

    with _stage(report, Stage.REALIZE):
        real = realize_range(markov, rank_tol=config.rank_tol, workers=config.workers)
        report.realization = real

    if Stage.CLUSTER in stages:
        with _stage(report, Stage.CLUSTER):
            floor = noise_floor(markov, config.noise_mode) if noisy else 0.0
            ss = stationary_set(markov, config.epsilon_Z, config.nu, relative=True, floor=floor)
            radius = config.radius
            if noisy:
                radius = max(radius, 3.0 * within_spread(real, ss))
            cluster = cluster_states(real, ss, radius, config.min_points)
            if noisy:
                cluster = recluster(cluster, config.support)
            report.stationary, report.cluster = ss, cluster
            report.calibration.update(epsilon_Z=ss.epsilon_Z, radius=radius)
            report.sigma_hat = cluster.sigma_hat
            report.representatives = tuple(
                DiscreteState(A=q.A, B=q.B, C=q.C, D=q.D, label=label)
                for label, q in cluster.representatives.items()
            )
            report.submodels = report.representatives

    if Stage.DETECT in stages:
        with _stage(report, Stage.DETECT):
            runs = label_runs(real, ss, cluster, max_distance=3.0 * radius if noisy else None)
            detection_tol, match_tol = config.detection_tol, config.match_tol
            if noisy:
                detection_tol = _calibrated(detection_tol, stationary_deviations(real, runs))
                match_tol = _calibrated(match_tol, stationary_residuals(real, markov, runs))
            report.calibration.update(detection_tol=detection_tol, match_tol=match_tol)
            estimate = detect_switches(
                real, markov, ss, cluster, runs, detection_tol, match_tol, config.ambiguity_tol
            )
            report.estimate = estimate
            report.phi_hat = estimate.phi_hat
            report.switches = estimate.switches
            if not estimate.is_complete:
                report.diagnostics.append(
                    f"[detect] {len(estimate.unassigned)} indices left unassigned"
                )

    if Stage.ALIGN in stages:
        with _stage(report, Stage.ALIGN):
            transforms = solve_transforms(markov, cluster, report.estimate, config.cond_limit)
            report.transforms = transforms
            report.submodels = apply_transforms(cluster, transforms)

    if truth is not None:
        report.metrics = evaluate(report, truth, inputs=inputs, seed=config.seed)
    return report


def _label_map(report: EstimationReport, truth: SlsModel) -> Tuple[Dict[int, int], bool]:
    if report.sigma_hat == truth.sigma:
        return match_labels(truth.states, report.submodels), True
    # Nearest true feature per estimated state when the counts differ
    features = {state.label: feature_M(state.A) for state in truth.states}
    mapping = {
        state.label: min(features, key=lambda j: abs(features[j] - feature_M(state.A)))
        for state in report.submodels
    }
    return mapping, False


def evaluate(
    report: EstimationReport,
    truth: SlsModel,
    inputs: Optional[np.ndarray] = None,
    seed: SeedLike = None,
) -> Dict[str, Any]:
    """
    Compare a report with the true model.

    Returns:
        `fit_phi` over the window once detection has run; `delta_P`, `vaf` and the mismatch
        series `eps_H` with its RMS once alignment has run; and the label map used.
    """

    metrics: Dict[str, Any] = {}
    if not report.submodels:
        return metrics
    mapping, bijective = _label_map(report, truth)
    metrics["label_map"] = {str(k): v for k, v in mapping.items()}

    lo, hi = report.window
    if report.phi_hat is not None:
        metrics["fit_phi"] = fit_phi(truth.switching.phi[lo - 1 : hi], relabel(report.phi_hat, mapping))

    if report.completed(Stage.ALIGN):
        if bijective:
            metrics["delta_P"] = delta_P(truth.states, report.submodels, mapping)
        else:
            report.diagnostics.append(
                f"[metrics] σ̂ = {report.sigma_hat} differs from σ = {truth.sigma}; δ_P skipped"
            )
        series = hankel_mismatch_series(generate_markov(truth, band=4 * truth.n), report)
        metrics["eps_H"] = series.tolist()
        metrics["eps_H_rms"] = rms(series)
        if inputs is None:
            inputs = multisine(truth.n_steps, truth.m, seed=seed)
        y_true = simulate(truth, np.zeros(truth.n), 1, inputs)
        y_pred = predict_output(report.submodels, report.phi_sequence(), np.zeros(truth.n), inputs)
        try:
            metrics["vaf"] = vaf(y_true, y_pred).tolist()
        except MetricError as e:
            report.diagnostics.append(f"[metrics] {e}")
    return metrics


def hankel_mismatch_series(markov_true: MarkovSequence, report: EstimationReport) -> np.ndarray:
    """
    Returns:
        ε_H(k) = ‖H(k) - Ĥ(k)‖_F for k in the window, Ĥ rebuilt from the common-basis submodels
        switched by the extended φ̂.
    """

    n = report.n
    estimated = generate_markov(report.estimated_model(), band=4 * n)
    lo, hi = report.window
    return np.array(
        [
            np.linalg.norm(
                build(markov_true, 2 * n + 1, 2 * n, k).data - build(estimated, 2 * n + 1, 2 * n, k).data
            )
            for k in range(lo, hi + 1)
        ]
    )


def hankel_mismatch(markov_true: MarkovSequence, report: EstimationReport, k: int) -> float:
    lo, hi = report.window
    if not lo <= k <= hi:
        raise WindowError(f"k={k} outside the window [{lo}, {hi}]")
    n = report.n
    estimated = generate_markov(report.estimated_model(), band=4 * n)
    return float(
        np.linalg.norm(
            build(markov_true, 2 * n + 1, 2 * n, k).data - build(estimated, 2 * n + 1, 2 * n, k).data
        )
    )


def build_model(config: RunConfig, seed: SeedLike = None) -> SlsModel:
    """
    The ground-truth model a configuration describes. Mixed switching fixes N = 109n + 26.
    """

    rng = make_rng(config.seed if seed is None else seed)
    if config.model == "example":
        states = three_state_example()
    else:
        states = random_sls(config.n, config.m, config.p, config.sigma, seed=rng)

    n = states[0].n
    if config.switching == "mixed":
        switching = mixed_switching(n)
    else:
        floor = config.dwell_floor if config.dwell_floor is not None else 12 * n + 2
        switching = random_switching(
            config.n_steps, len(states), floor, seed=rng, dwell_ceiling=int(2.5 * floor)
        )
    return SlsModel(states=states, switching=switching)


def snr_sweep(
    model: SlsModel,
    snrs: Sequence[float],
    config: Optional[RunConfig] = None,
    seed: SeedLike = None,
) -> pd.DataFrame:
    """
    Mismatch and classification versus SNR for one model.

    Returns:
        One row per SNR: snr, eps_H_rms, fit_phi, delta_P, sigma_hat, failed.
    """

    config = RunConfig() if config is None else config
    markov = generate_markov(model, band=4 * model.n)
    children = np.random.SeedSequence(seed).spawn(len(snrs))
    rows = []
    for snr, child in zip(snrs, children):
        noisy = add_noise(markov, NoiseMode.SNR, snr, seed=np.random.default_rng(child))
        run_config = config.update(noise_mode=NoiseMode.SNR, noise_level=float(snr), calibrate=True)
        row = {"snr": float(snr), "failed": False}
        try:
            report = meta_run(noisy, run_config, truth=model)
            row.update(
                eps_H_rms=report.metrics.get("eps_H_rms", np.nan),
                fit_phi=report.metrics.get("fit_phi", np.nan),
                delta_P=report.metrics.get("delta_P", np.nan),
                sigma_hat=report.sigma_hat,
            )
        except SlsError as e:
            logger.warning("SNR %g dB failed: %s", snr, e)
            row.update(eps_H_rms=np.nan, fit_phi=np.nan, delta_P=np.nan, sigma_hat=np.nan, failed=True)
        rows.append(row)
    return pd.DataFrame(rows, columns=["snr", "eps_H_rms", "fit_phi", "delta_P", "sigma_hat", "failed"])
