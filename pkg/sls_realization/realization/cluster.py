"""
Discrete-state estimation.

Within a switch-free stretch the sliding Hankel matrix does not move, so its first difference
δ_H(k) = H(k+1) - H(k) vanishes. Maximal runs of (near-)zero differences long enough are LTI
intervals S_i = [α_i, β_i]; the realization at their midpoints γ_i is similar to one submodel, and
the similarity-invariant feature M(Â(γ_i)) is clustered to recover the set of submodels.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from sklearn.cluster import DBSCAN

from sls_realization.realization.hankel import build
from sls_realization.realization.ltv import LtvRealization
from sls_realization.system.sls_model import MarkovSequence, Quadruple
from sls_realization.utils.config import CLUSTER_MIN_POINTS, CLUSTER_RADIUS, EPSILON_Z, NU
from sls_realization.utils.errors import ClusteringError, StationarityError, WindowError
from sls_realization.utils.linalg import feature_M

logger = logging.getLogger(__name__)

__all__ = [
    "Interval",
    "StationarySet",
    "ClusterResult",
    "LabeledRun",
    "hankel_diff",
    "stationary_set",
    "cluster_states",
    "recluster",
    "label_runs",
    "within_spread",
]


class Interval(NamedTuple):
    alpha: int
    beta: int

    @property
    def gamma(self) -> int:
        return (self.alpha + self.beta) // 2

    @property
    def length(self) -> int:
        """β - α, the measure the interval thresholds refer to."""
        return self.beta - self.alpha

    def __contains__(self, k) -> bool:
        return self.alpha <= k <= self.beta


@dataclass(frozen=True, eq=False)
class StationarySet:
    epsilon_Z: float
    nu: int
    order: int
    window: Tuple[int, int]
    ## ‖δ_H(k)‖_F for k in the window
    norms: np.ndarray
    members: Tuple[int, ...]
    ## Maximal runs with β - α ≥ νn
    intervals: Tuple[Interval, ...]
    ## Maximal runs below that length
    short_intervals: Tuple[Interval, ...]

    @property
    def runs(self) -> Tuple[Interval, ...]:
        return tuple(sorted(self.intervals + self.short_intervals))

    def norm(self, k: int) -> float:
        lo, hi = self.window
        if not lo <= k <= hi:
            raise WindowError(f"k={k} outside the stationary-set window [{lo}, {hi}]")
        return float(self.norms[k - lo])

    def is_member(self, k: int) -> bool:
        lo, hi = self.window
        return lo <= k <= hi and bool(self.norms[k - lo] <= self.epsilon_Z)

    def to_frame(self) -> pd.DataFrame:
        lo, hi = self.window
        return pd.DataFrame(
            {
                "k": np.arange(lo, hi + 1),
                "delta_H": self.norms,
                "member": (self.norms <= self.epsilon_Z).astype(int),
            }
        )


@dataclass(frozen=True, eq=False)
class ClusterResult:
    intervals: Tuple[Interval, ...]
    ## Cluster label of every interval, contiguous 1..σ̂ in order of first appearance
    assignments: Tuple[int, ...]
    features: Tuple[float, ...]
    ## P̂(γ_i) of every interval
    quads: Tuple[Quadruple, ...]
    radius: float

    @property
    def sigma_hat(self) -> int:
        return max(self.assignments) if self.assignments else 0

    @property
    def labels(self) -> Tuple[int, ...]:
        return tuple(range(1, self.sigma_hat + 1))

    def members(self, label: int) -> List[int]:
        return [i for i, assigned in enumerate(self.assignments) if assigned == label]

    def representative_index(self, label: int) -> int:
        """
        Returns:
            The member interval with the largest β - α, the first one on ties.
        """

        members = self.members(label)
        if not members:
            raise ClusteringError(f"No interval carries label {label}")
        return max(members, key=lambda i: (self.intervals[i].length, -i))

    @property
    def representatives(self) -> Dict[int, Quadruple]:
        return {label: self.quads[self.representative_index(label)] for label in self.labels}

    def support(self, label: int) -> int:
        return self.intervals[self.representative_index(label)].length

    def centers(self) -> Dict[int, float]:
        features = np.asarray(self.features)
        return {
            label: float(np.mean(features[self.members(label)])) for label in self.labels
        }

    def nearest(self, feature: float) -> Tuple[int, float]:
        """
        Returns:
            (label, distance) of the closest cluster center, the lower label on ties.
        """

        centers = self.centers()
        distances = np.array([abs(feature - centers[label]) for label in self.labels])
        best = int(np.argmin(distances))
        return self.labels[best], float(distances[best])

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "interval": np.arange(1, len(self.intervals) + 1),
                "alpha": [interval.alpha for interval in self.intervals],
                "beta": [interval.beta for interval in self.intervals],
                "gamma": [interval.gamma for interval in self.intervals],
                "feature": list(self.features),
                "label": list(self.assignments),
            }
        )

    def to_dict(self) -> Dict:
        return {
            "sigma_hat": self.sigma_hat,
            "radius": self.radius,
            "intervals": [list(interval) for interval in self.intervals],
            "assignments": list(self.assignments),
            "features": list(self.features),
            "representatives": {
                str(label): quad.to_dict() for label, quad in self.representatives.items()
            },
        }


class LabeledRun(NamedTuple):
    interval: Interval
    label: int
    feature: float
    clustered: bool


def hankel_diff(markov: MarkovSequence, k: int) -> np.ndarray:
    n = markov.order
    q, r = 2 * n + 1, 2 * n
    return build(markov, q, r, k + 1).data - build(markov, q, r, k).data


def _maximal_runs(members: np.ndarray) -> List[Interval]:
    if members.size == 0:
        return []
    breaks = np.flatnonzero(np.diff(members) > 1)
    starts = np.concatenate(([members[0]], members[breaks + 1]))
    stops = np.concatenate((members[breaks], [members[-1]]))
    return [Interval(int(a), int(b)) for a, b in zip(starts, stops)]


def stationary_set(
    markov: MarkovSequence,
    epsilon_Z: float = EPSILON_Z,
    nu: int = NU,
    relative: bool = True,
    floor: float = 0.0,
) -> StationarySet:
    """
    Args:
        markov: Markov parameters.
        epsilon_Z: Threshold on ‖δ_H(k)‖_F; a fraction of max_k ‖H(k)‖_F when `relative`.
        nu: Intervals need β - α ≥ ν·n.
        relative: Scale the threshold by the largest Hankel norm over the window.
        floor: Absolute lower bound on the threshold, e.g. the expected noise level of ‖δ_H‖_F.

    Returns:
        The stationary set over the window [2n+1, N-4n].

    Raises:
        StationarityError: If no run is long enough.
    """

    if not epsilon_Z > 0.0:
        raise ValueError(f"epsilon_Z must be positive, got {epsilon_Z}")
    if nu < 1:
        raise ValueError(f"nu must be positive, got {nu}")

    n = markov.order
    lo, hi = markov.window
    hankels = np.stack(
        [build(markov, 2 * n + 1, 2 * n, k).data for k in range(lo, hi + 2)]
    )
    norms = np.linalg.norm(hankels[1:] - hankels[:-1], axis=(1, 2))
    scale = float(np.max(np.linalg.norm(hankels, axis=(1, 2))))
    threshold = max(epsilon_Z * scale if relative else epsilon_Z, floor)

    members = np.flatnonzero(norms <= threshold) + lo
    runs = _maximal_runs(members)
    intervals = tuple(run for run in runs if run.length >= nu * n)
    short_intervals = tuple(run for run in runs if run.length < nu * n)
    if not intervals:
        raise StationarityError(
            f"No stationary interval with β - α ≥ νn = {nu * n} among {len(runs)} runs "
            f"(ε_Z = {threshold:.3g}); try a larger epsilon_Z or a smaller nu"
        )

    logger.info(
        "Stationary set: %d members, %d intervals, %d short runs (ε_Z = %.3g)",
        members.size,
        len(intervals),
        len(short_intervals),
        threshold,
    )
    return StationarySet(
        epsilon_Z=threshold,
        nu=nu,
        order=n,
        window=(lo, hi),
        norms=norms,
        members=tuple(int(k) for k in members),
        intervals=intervals,
        short_intervals=short_intervals,
    )


def _first_appearance(raw: np.ndarray) -> Tuple[int, ...]:
    mapping: Dict[int, int] = {}
    for value in raw:
        mapping.setdefault(int(value), len(mapping) + 1)
    return tuple(mapping[int(value)] for value in raw)


def cluster_states(
    real: LtvRealization,
    ss: StationarySet,
    radius: float = CLUSTER_RADIUS,
    min_points: int = CLUSTER_MIN_POINTS,
) -> ClusterResult:
    """
    Density-based clustering of M(Â(γ_i)) over the stationary intervals.

    Points DBSCAN leaves as noise (only possible with `min_points` > 1) become singleton
    clusters.

    Args:
        real: Realization covering every γ_i.
        ss: Stationary set.
        radius: Neighborhood radius.
        min_points: Minimum number of points of a core neighborhood.

    Returns:
        Cluster labels 1..σ̂ in order of first appearance along time.
    """

    intervals = ss.intervals
    if not intervals:
        raise ClusteringError("No stationary intervals to cluster")

    quads = tuple(real.quad(interval.gamma) for interval in intervals)
    features = np.array([feature_M(quad.A) for quad in quads])

    raw = DBSCAN(eps=radius, min_samples=min_points).fit(features[:, None]).labels_.copy()
    noise = np.flatnonzero(raw < 0)
    raw[noise] = raw.max(initial=-1) + 1 + np.arange(noise.size)

    result = ClusterResult(
        intervals=intervals,
        assignments=_first_appearance(raw),
        features=tuple(float(f) for f in features),
        quads=quads,
        radius=radius,
    )
    logger.info("Clustered %d intervals into σ̂ = %d states", len(intervals), result.sigma_hat)
    for label in result.labels:
        logger.debug(
            "State %d: %d intervals, center M = %.6g",
            label,
            len(result.members(label)),
            result.centers()[label],
        )
    return result


def recluster(result: ClusterResult, min_support: int) -> ClusterResult:
    """
    Merge every cluster whose longest interval is shorter than `min_support` into the surviving
    cluster with the nearest center.

    Returns:
        `result` itself when nothing is merged, otherwise the relabelled result.
    """

    centers = result.centers()
    surviving = [label for label in result.labels if result.support(label) >= min_support]
    if not surviving:
        raise ClusteringError(
            f"Every one of the {result.sigma_hat} clusters is supported by intervals shorter "
            f"than {min_support}"
        )
    if len(surviving) == result.sigma_hat:
        return result

    target = {}
    for label in result.labels:
        if label in surviving:
            target[label] = label
        else:
            target[label] = min(surviving, key=lambda s: (abs(centers[s] - centers[label]), s))
            logger.warning(
                "Merged cluster %d (support %d) into cluster %d",
                label,
                result.support(label),
                target[label],
            )

    merged = ClusterResult(
        intervals=result.intervals,
        assignments=_first_appearance(np.array([target[a] for a in result.assignments])),
        features=result.features,
        quads=result.quads,
        radius=result.radius,
    )
    logger.info("Re-clustering reduced σ̂ from %d to %d", result.sigma_hat, merged.sigma_hat)
    return merged


def label_runs(
    real: LtvRealization,
    ss: StationarySet,
    result: ClusterResult,
    max_distance: Optional[float] = None,
) -> List[LabeledRun]:
    """
    Label every maximal stationary run. Clustered intervals keep their cluster label; shorter runs
    take the label of the nearest cluster center, or 0 when it is farther than `max_distance`.

    Returns:
        The runs in time order.
    """

    assigned = dict(zip(result.intervals, zip(result.assignments, result.features)))
    labeled = []
    for run in ss.runs:
        if run in assigned:
            label, feature = assigned[run]
            labeled.append(LabeledRun(run, label, feature, True))
            continue
        if run.gamma not in real.anchors:
            logger.debug("Run [%d, %d] has no realization at its midpoint", *run)
            continue
        feature = feature_M(real.quad(run.gamma).A)
        label, distance = result.nearest(feature)
        if max_distance is not None and distance > max_distance:
            logger.debug("Run [%d, %d] left unlabelled (distance %.3g)", run.alpha, run.beta, distance)
            label = 0
        labeled.append(LabeledRun(run, label, feature, False))
    return labeled


def within_spread(real: LtvRealization, ss: StationarySet, intervals: Optional[Sequence[Interval]] = None) -> float:
    """
    Pooled within-interval standard deviation of M(Â(k)) over the members of each interval.
    """

    intervals = ss.intervals if intervals is None else intervals
    residuals = []
    for interval in intervals:
        values = np.array(
            [feature_M(real.quad(k).A) for k in range(interval.alpha, interval.beta + 1) if k in real.anchors]
        )
        if values.size > 1:
            residuals.append(values - values.mean())
    if not residuals:
        return 0.0
    return float(np.sqrt(np.mean(np.concatenate(residuals) ** 2)))
