"""
Evaluation metrics against a known ground truth.
"""

from typing import Dict, Optional, Sequence, Union

import numpy as np
from scipy.optimize import linear_sum_assignment

from sls_realization.system.assumptions import observability_matrix
from sls_realization.system.sls_model import DiscreteState, Quadruple, SwitchingSequence
from sls_realization.utils.errors import MetricError
from sls_realization.utils.linalg import feature_M, pinv

LabelsLike = Union[SwitchingSequence, Sequence[int], np.ndarray]


def vaf(y_true: np.ndarray, y_pred: np.ndarray) -> np.ndarray:
    """
    Variance accounted for, (1 - var(y - ŷ)/var(y))·100 per output channel. Unbounded below.

    Raises:
        MetricError: On a shape mismatch or a constant truth channel.
    """

    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    if y_true.ndim == 1:
        y_true, y_pred = y_true[:, None], y_pred.reshape(-1, 1)
    if y_true.shape != y_pred.shape:
        raise MetricError(f"Output shapes differ: {y_true.shape} versus {y_pred.shape}")
    variance = np.var(y_true, axis=0)
    if np.any(variance == 0.0):
        raise MetricError(f"Zero-variance output channels {np.flatnonzero(variance == 0.0).tolist()}")
    return (1.0 - np.var(y_true - y_pred, axis=0) / variance) * 100.0


def _labels(phi: LabelsLike) -> np.ndarray:
    if isinstance(phi, SwitchingSequence):
        return np.asarray(phi.phi)
    return np.asarray(phi, dtype=np.int64)


def fit_phi(phi: LabelsLike, phi_hat: LabelsLike) -> float:
    """
    Returns:
        Percentage of indices where φ̂ equals φ.
    """

    phi, phi_hat = _labels(phi), _labels(phi_hat)
    if phi.shape != phi_hat.shape:
        raise MetricError(f"Label sequences span {phi.size} and {phi_hat.size} indices")
    if phi.size == 0:
        raise MetricError("Empty label sequences")
    return float((1.0 - np.mean(phi != phi_hat)) * 100.0)


def match_labels(
    true_states: Sequence[DiscreteState], estimated_states: Sequence[DiscreteState]
) -> Dict[int, int]:
    """
    Bijective assignment of estimated to true labels minimizing the total |M(A_j) - M(Ǎ_i)|.

    Returns:
        estimated label → true label.
    """

    if len(true_states) != len(estimated_states):
        raise MetricError(
            f"Cannot match {len(estimated_states)} estimated states to {len(true_states)} true ones"
        )
    true_features = np.array([feature_M(state.A) for state in true_states])
    estimated_features = np.array([feature_M(state.A) for state in estimated_states])
    cost = np.abs(estimated_features[:, None] - true_features[None, :])
    rows, columns = linear_sum_assignment(cost)
    return {
        estimated_states[i].label: true_states[j].label for i, j in zip(rows, columns)
    }


def relabel(phi_hat: LabelsLike, mapping: Dict[int, int]) -> np.ndarray:
    """
    Apply `mapping` to a label sequence; labels outside it (e.g. 0) are kept.
    """

    phi_hat = _labels(phi_hat)
    return np.array([mapping.get(int(label), int(label)) for label in phi_hat], dtype=np.int64)


def align_gauge(
    true_states: Sequence[Quadruple], estimated_states: Sequence[Quadruple]
) -> np.ndarray:
    """
    Least-squares common basis change T with Č_j ≈ C_j T for all matched pairs, from the stacked
    extended observability matrices.

    Args:
        true_states: True submodels.
        estimated_states: Common-basis estimates, in the same order.

    Returns:
        T such that `estimated.similar(inv(T))` is expressed in the true basis.
    """

    n = true_states[0].n
    true_obs = np.vstack([observability_matrix(state, n) for state in true_states])
    estimated_obs = np.vstack([observability_matrix(state, n) for state in estimated_states])
    return pinv(true_obs) @ estimated_obs


def delta_P(
    true_states: Sequence[DiscreteState],
    estimated_states: Sequence[DiscreteState],
    mapping: Optional[Dict[int, int]] = None,
    align: bool = True,
) -> float:
    """
    Σ_j ‖M_j - M̂_j‖_F / ‖M_j‖_F over the stacked matrices M = [[A, B], [C, D]].

    Args:
        true_states: True submodels.
        estimated_states: Common-basis estimates.
        mapping: estimated label → true label, nearest-feature matching by default.
        align: Remove the global basis freedom with `align_gauge` first.
    """

    if mapping is None:
        mapping = match_labels(true_states, estimated_states)
    if sorted(mapping.values()) != sorted(state.label for state in true_states):
        raise MetricError(f"Label mapping {mapping} is not a bijection onto the true labels")

    by_label = {state.label: state for state in true_states}
    pairs = [(by_label[mapping[state.label]], state) for state in estimated_states]
    estimates = [estimate for _, estimate in pairs]
    if align:
        T = align_gauge([truth for truth, _ in pairs], estimates)
        estimates = [estimate.similar(np.linalg.inv(T)) for estimate in estimates]

    total = 0.0
    for (truth, _), estimate in zip(pairs, estimates):
        reference = truth.stacked()
        total += np.linalg.norm(reference - estimate.stacked()) / np.linalg.norm(reference)
    return float(total)


def rms(values: np.ndarray) -> float:
    values = np.asarray(values, dtype=float)
    return float(np.sqrt(np.mean(values ** 2))) if values.size else float("nan")
