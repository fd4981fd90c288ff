"""
Switch detection.

Three detectors assign labels around the stationary runs and locate the switches between them:

- MARKOV: the quadruple of a run predicts the neighbouring Markov parameters; the first index
  where the least-squares Č, Ď (forward) or B̌, Ď (backward) leave the run's Ĉ, D̂ or B̂, D̂
  is a switch. Used on runs with β - α ≥ 2n - 1.
- CORRECTION: the correction operators V̂(k) = Ô(k)†Ô(k+1) and Ŵ(k) = R̂(k-1)R̂(k)† have
  M = n while the data window of k stays inside one segment; the first deviation beyond the run
  reveals the switch. Used on the shorter runs.
- SIGNATURE: stretches no run covers are filled from a known switch by comparing an (n+1)×n Hankel
  matrix with the Hankel signatures of the clustered submodels, then extended by Markov matching.

`assemble_phi` merges the assignments in that order.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from sls_realization.realization.cluster import ClusterResult, LabeledRun, StationarySet
from sls_realization.realization.hankel import build, lti_hankel
from sls_realization.realization.ltv import LtvRealization
from sls_realization.system.assumptions import controllability_matrix, observability_matrix
from sls_realization.system.sls_model import MarkovSequence, Quadruple, SwitchingSequence
from sls_realization.utils.config import AMBIGUITY_TOL, DETECTION_TOL, MATCH_TOL
from sls_realization.utils.errors import (
    AmbiguityError,
    ConflictError,
    DetectionError,
    RankDeficiencyError,
)
from sls_realization.utils.linalg import feature_M, numerical_rank, pinv
from sls_realization.utils.stage import Detector, Direction

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SwitchFragment:
    """
    Labels one detector assigned to the stretch [start, stop], and the switch it located, if any.
    """

    detector: Detector
    direction: Direction
    label: int
    start: int
    stop: int
    switch: Optional[int] = None
    steps: Optional[int] = None

    @property
    def provenance(self) -> str:
        return f"{self.detector.to_str()}/{self.direction.to_str()}"

    def to_dict(self) -> Dict:
        return {
            "detector": self.detector.to_str(),
            "direction": self.direction.to_str(),
            "label": self.label,
            "start": self.start,
            "stop": self.stop,
            "switch": self.switch,
            "steps": self.steps,
        }


@dataclass(frozen=True, eq=False)
class SwitchEstimate:
    window: Tuple[int, int]
    ## φ̂ over the window, 0 where unassigned
    phi_hat: np.ndarray
    ## "interval", "<detector>/<direction>" or "" per index
    provenance: Tuple[str, ...]
    fragments: Tuple[SwitchFragment, ...]

    def label_at(self, k: int) -> int:
        lo, hi = self.window
        if not lo <= k <= hi:
            raise IndexError(f"k={k} outside [{lo}, {hi}]")
        return int(self.phi_hat[k - lo])

    @property
    def unassigned(self) -> Tuple[int, ...]:
        return tuple(int(k) for k in np.flatnonzero(self.phi_hat == 0) + self.window[0])

    @property
    def is_complete(self) -> bool:
        return not np.any(self.phi_hat == 0)

    @property
    def switches(self) -> Tuple[int, ...]:
        lo, hi = self.window
        phi = self.phi_hat
        found = set(
            int(k) for k in np.flatnonzero((phi[1:] != phi[:-1]) & (phi[1:] > 0) & (phi[:-1] > 0)) + lo + 1
        )
        for fragment in self.fragments:
            k = fragment.switch
            if k is not None and lo < k <= hi and self.label_at(k) != self.label_at(k - 1):
                found.add(k)
        return tuple(sorted(found))

    def sources(self) -> Dict[int, SwitchFragment]:
        """
        Returns:
            The first fragment, in merge order, reporting each detected switch.
        """

        ordered = sorted(self.fragments, key=_merge_key)
        result: Dict[int, SwitchFragment] = {}
        for fragment in ordered:
            if fragment.switch is not None:
                result.setdefault(fragment.switch, fragment)
        return {k: result[k] for k in self.switches if k in result}

    def extended(self, n_steps: int) -> SwitchingSequence:
        """
        φ̂ on [1, N]: unassigned indices take the label of the previous assigned index, leading
        ones the first assigned label.
        """

        return extend_phi(self.phi_hat, self.window, n_steps)

    def to_frame(self, phi: Optional[SwitchingSequence] = None) -> pd.DataFrame:
        lo, hi = self.window
        ks = np.arange(lo, hi + 1)
        frame = pd.DataFrame({"k": ks})
        if phi is not None:
            frame["phi"] = [phi.label_at(int(k)) for k in ks]
        frame["phi_hat"] = self.phi_hat
        frame["provenance"] = list(self.provenance)
        return frame

    def to_dict(self) -> Dict:
        return {
            "window": list(self.window),
            "phi_hat": [int(label) for label in self.phi_hat],
            "switches": list(self.switches),
            "fragments": [fragment.to_dict() for fragment in self.fragments],
        }


def extend_phi(phi_hat: np.ndarray, window: Tuple[int, int], n_steps: int) -> SwitchingSequence:
    """
    Extend a window labelling to [1, N]; unassigned (0) indices take the previous label, leading ones
    the first label.
    """

    phi_hat = np.asarray(phi_hat, dtype=np.int64)
    if not np.any(phi_hat > 0):
        raise DetectionError("No index of the window carries a label")
    lo, hi = window
    full = np.zeros(n_steps, dtype=np.int64)
    full[lo - 1 : hi] = phi_hat
    filled = pd.Series(full).replace(0, np.nan).ffill().bfill()
    return SwitchingSequence(filled.to_numpy(dtype=np.int64))


class MatchResult(NamedTuple):
    estimate: np.ndarray
    D: np.ndarray
    residual: float
    same: bool


## ~ Correction operators


def forward_correction(real: LtvRealization, k: int) -> np.ndarray:
    anchor = real.anchor(k)
    return pinv(anchor.obs) @ anchor.obs_next


def backward_correction(real: LtvRealization, k: int) -> np.ndarray:
    anchor = real.anchor(k)
    return anchor.ctrl_prev @ pinv(anchor.ctrl)


def correction_deviation(real: LtvRealization, k: int, direction: Direction) -> float:
    """
    Returns:
        |M(V̂(k)) - n| forward, |M(Ŵ(k)) - n| backward.
    """

    if direction.is_forward():
        operator = forward_correction(real, k)
    else:
        operator = backward_correction(real, k)
    return abs(feature_M(operator) - real.order)


def _scan_correction(
    real: LtvRealization, run: LabeledRun, direction: Direction, tol: float
) -> SwitchFragment:
    n = real.order
    lo, hi = real.window
    alpha, beta = run.interval

    if direction.is_forward():
        nominal = beta - 2 * n
        # The operator is exactly the identity inside the run
        for k in range(max(nominal, alpha), beta + 2):
            if k > hi:
                break
            deviation = correction_deviation(real, k, direction)
            if deviation >= tol:
                switch = k + 2 * n + 1
                logger.debug("Forward correction fired at k=%d (|M-n|=%.3g)", k, deviation)
                return SwitchFragment(
                    Detector.CORRECTION,
                    direction,
                    run.label,
                    alpha,
                    min(switch - 1, hi),
                    switch if switch <= hi else None,
                    k - nominal,
                )
        logger.warning("Forward correction scan from run [%d, %d] never fired", alpha, beta)
        return SwitchFragment(Detector.CORRECTION, direction, run.label, alpha, beta)

    nominal = alpha + 2 * n - 1
    for k in range(min(nominal, beta), alpha - 2, -1):
        if k < lo:
            break
        deviation = correction_deviation(real, k, direction)
        if deviation >= tol:
            switch = k - 2 * n + 1
            logger.debug("Backward correction fired at k=%d (|M-n|=%.3g)", k, deviation)
            return SwitchFragment(
                Detector.CORRECTION,
                direction,
                run.label,
                max(switch, lo),
                beta,
                switch if switch > lo else None,
                nominal - k,
            )
    logger.warning("Backward correction scan from run [%d, %d] never fired", alpha, beta)
    return SwitchFragment(Detector.CORRECTION, direction, run.label, alpha, beta)


def detect_correction(
    real: LtvRealization, runs: Sequence[LabeledRun], tol: float = DETECTION_TOL
) -> List[SwitchFragment]:
    """
    Correction-operator detection around the labelled runs with β - α < 2n - 1.

    Forward scans start at β - 2n and fire at the first k with |M(V̂(k)) - n| ≥ tol, declaring the
    switch k + 2n + 1; backward scans start at α + 2n - 1 and fire on Ŵ, declaring k - 2n + 1.
    Scans skip the part of that range preceding (following) the run and stop at the window edges.
    `steps` counts from the nominal start, at most 2n + 1 forward and 2n backward.
    """

    n = real.order
    fragments = []
    for run in runs:
        if run.label == 0 or run.interval.length >= 2 * n - 1:
            continue
        for direction in Direction:
            fragments.append(_scan_correction(real, run, direction, tol))
    logger.info(
        "Correction detection: %d switches from %d fragments",
        sum(f.switch is not None for f in fragments),
        len(fragments),
    )
    return fragments


## ~ Markov-parameter matching


def match_forward(
    markov: MarkovSequence, quad: Quadruple, l: int, tol: float = MATCH_TOL
) -> MatchResult:
    """
    Least-squares output matrix from H_{1,2n}(ℓ) = [h(ℓ, ℓ-1), ..., h(ℓ, ℓ-2n)]:
    Č = H_{1,2n}(ℓ)·[B̂, ÂB̂, ..., Â^(2n-1)B̂]†, Ď = h(ℓ, ℓ).

    Args:
        markov: Markov parameters.
        quad: Quadruple of the state active on [ℓ-2n, ℓ-1].
        l: Tested index.
        tol: Threshold on ‖Č - Ĉ‖_F + ‖Ď - D̂‖_F.

    Returns:
        (Č, Ď, residual, same) where `same` is True while φ(ℓ) is still that state.
    """

    n = quad.n
    ctrl = controllability_matrix(quad, 2 * n)
    if numerical_rank(ctrl) < n:
        raise RankDeficiencyError(f"Controllability matrix of the matched quadruple has rank below n={n}")
    row = np.hstack([markov.block(l, l - t) for t in range(1, 2 * n + 1)])
    c_check = row @ pinv(ctrl)
    d_check = markov.block(l, l)
    residual = float(np.linalg.norm(c_check - quad.C) + np.linalg.norm(d_check - quad.D))
    return MatchResult(c_check, d_check, residual, residual < tol)


def match_backward(
    markov: MarkovSequence, quad: Quadruple, l: int, tol: float = MATCH_TOL
) -> MatchResult:
    """
    Mirror of `match_forward`: B̌ = [Ĉ; ĈÂ; ...; ĈÂ^(2n-1)]†·H_{2n,1}(ℓ+1), Ď = h(ℓ, ℓ), for the state
    active on [ℓ+1, ℓ+2n].
    """

    n = quad.n
    obs = observability_matrix(quad, 2 * n)
    if numerical_rank(obs) < n:
        raise RankDeficiencyError(f"Observability matrix of the matched quadruple has rank below n={n}")
    column = np.vstack([markov.block(l + s, l) for s in range(1, 2 * n + 1)])
    b_check = pinv(obs) @ column
    d_check = markov.block(l, l)
    residual = float(np.linalg.norm(b_check - quad.B) + np.linalg.norm(d_check - quad.D))
    return MatchResult(b_check, d_check, residual, residual < tol)


def _extend_forward(
    markov: MarkovSequence, quad: Quadruple, first: int, last: int, tol: float
) -> Tuple[Optional[int], int]:
    """
    Returns:
        (first failing ℓ or None, last ℓ tested) for ℓ in [first, last].
    """

    l = first - 1
    for l in range(first, last + 1):
        if not match_forward(markov, quad, l, tol).same:
            return l, l
    return None, l


def _extend_backward(
    markov: MarkovSequence, quad: Quadruple, first: int, last: int, tol: float
) -> Tuple[Optional[int], int]:
    l = first + 1
    for l in range(first, last - 1, -1):
        if not match_backward(markov, quad, l, tol).same:
            return l, l
    return None, l


def detect_markov(
    real: LtvRealization,
    markov: MarkovSequence,
    runs: Sequence[LabeledRun],
    tol: float = MATCH_TOL,
) -> List[SwitchFragment]:
    """
    Markov-matching detection around the labelled runs with β - α ≥ 2n - 1, using the run's own
    P̂(γ). Forward matching tests ℓ = β+1, β+2, ... and declares the first failing ℓ a switch
    (at most 2n+1 steps past β); backward matching tests ℓ = α-1, α-2, ... and declares ℓ + 1
    (at most 2n steps).
    """

    n = real.order
    lo, hi = real.window
    fragments = []
    for run in runs:
        alpha, beta = run.interval
        if run.label == 0 or run.interval.length < 2 * n - 1:
            continue
        quad = real.quad(run.interval.gamma)

        failed, tested = _extend_forward(markov, quad, beta + 1, min(beta + 2 * n + 2, hi), tol)
        if failed is None:
            if tested < hi:
                logger.warning("Forward matching from run [%d, %d] never failed", alpha, beta)
            fragments.append(
                SwitchFragment(Detector.MARKOV, Direction.FORWARD, run.label, alpha, max(tested, beta))
            )
        else:
            fragments.append(
                SwitchFragment(
                    Detector.MARKOV, Direction.FORWARD, run.label, alpha, failed - 1, failed, failed - 1 - beta
                )
            )

        failed, tested = _extend_backward(markov, quad, alpha - 1, max(alpha - 2 * n - 1, lo), tol)
        if failed is None:
            if tested > lo:
                logger.warning("Backward matching from run [%d, %d] never failed", alpha, beta)
            fragments.append(
                SwitchFragment(Detector.MARKOV, Direction.BACKWARD, run.label, min(tested, alpha), beta)
            )
        else:
            switch = failed + 1
            fragments.append(
                SwitchFragment(
                    Detector.MARKOV,
                    Direction.BACKWARD,
                    run.label,
                    switch,
                    beta,
                    switch if switch > lo else None,
                    alpha - 1 - failed,
                )
            )
    logger.info(
        "Markov detection: %d switches from %d fragments",
        sum(f.switch is not None for f in fragments),
        len(fragments),
    )
    return fragments


## ~ Hankel signatures


def hankel_signature(quad: Quadruple) -> np.ndarray:
    """
    Returns:
        The (n+1)p × nm block Hankel matrix with block (s, t) = ĈÂ^(s+t-2)B̂.
    """

    return lti_hankel(quad, quad.n + 1, quad.n)


def _closest(
    hankel: np.ndarray, signatures: Dict[int, np.ndarray], ambiguity_tol: float, where: str
) -> int:
    labels = sorted(signatures)
    distances = np.array([np.linalg.norm(hankel - signatures[label]) for label in labels])
    order = np.argsort(distances, kind="stable")
    if len(labels) > 1 and distances[order[1]] - distances[order[0]] <= ambiguity_tol:
        raise AmbiguityError(
            f"Hankel signatures of states {labels[order[0]]} and {labels[order[1]]} are equally "
            f"close ({distances[order[0]]:.3g}) {where}"
        )
    return labels[order[0]]


def detect_short(
    markov: MarkovSequence,
    cluster: ClusterResult,
    boundary: int,
    direction: Direction,
    limit: int,
    tol: float = MATCH_TOL,
    ambiguity_tol: float = AMBIGUITY_TOL,
) -> List[SwitchFragment]:
    """
    Fill an unassigned stretch from a known switch.

    Forward: the segment starting at `boundary` is identified from H_{n+1,n}(boundary+n), which
    only involves [boundary, boundary+2n]; labels are assigned there and Markov matching with the
    identified representative finds the next switch. Repeats until `limit`, the last index to fill.

    Backward: the segment ending at `boundary - 1` is identified from H_{n+1,n}(boundary-n-1),
    assigned on [boundary-2n-1, boundary-1] and extended to the left down to `limit`.
    """

    n = markov.order
    lo, hi = markov.window
    representatives = cluster.representatives
    signatures = {label: hankel_signature(quad) for label, quad in representatives.items()}
    fragments = []

    if direction.is_forward():
        cursor = boundary
        while cursor <= limit:
            hankel = build(markov, n + 1, n, cursor + n).data
            label = _closest(hankel, signatures, ambiguity_tol, f"at the segment starting at k={cursor}")
            last = min(limit + 1, hi)
            failed, tested = _extend_forward(markov, representatives[label], cursor + 2 * n + 1, last, tol)
            stop = failed - 1 if failed is not None else max(tested, cursor + 2 * n)
            fragments.append(
                SwitchFragment(
                    Detector.SIGNATURE,
                    direction,
                    label,
                    cursor,
                    min(stop, limit),
                    failed,
                    None if failed is None else failed - cursor - 2 * n - 1,
                )
            )
            if failed is None:
                break
            cursor = failed
        return fragments

    end = boundary - 1
    while end >= limit:
        hankel = build(markov, n + 1, n, end - n).data
        label = _closest(hankel, signatures, ambiguity_tol, f"at the segment ending at k={end}")
        last = max(limit - 1, lo)
        failed, tested = _extend_backward(markov, representatives[label], end - 2 * n - 1, last, tol)
        start = failed + 1 if failed is not None else min(tested, end - 2 * n)
        fragments.append(
            SwitchFragment(
                Detector.SIGNATURE,
                direction,
                label,
                max(start, limit),
                end,
                start if failed is not None and start > lo else None,
                None if failed is None else end - 2 * n - 1 - failed,
            )
        )
        if failed is None:
            break
        end = failed
    return fragments


def _gaps(phi_hat: np.ndarray, lo: int) -> List[Tuple[int, int]]:
    unassigned = np.flatnonzero(phi_hat == 0)
    if unassigned.size == 0:
        return []
    breaks = np.flatnonzero(np.diff(unassigned) > 1)
    starts = np.concatenate(([unassigned[0]], unassigned[breaks + 1])) + lo
    stops = np.concatenate((unassigned[breaks], [unassigned[-1]])) + lo
    return [(int(a), int(b)) for a, b in zip(starts, stops)]


def detect_signature(
    markov: MarkovSequence,
    cluster: ClusterResult,
    partial: SwitchEstimate,
    tol: float = MATCH_TOL,
    ambiguity_tol: float = AMBIGUITY_TOL,
) -> List[SwitchFragment]:
    """
    Run `detect_short` on every stretch left unassigned by `partial`: forward from the switch
    opening the stretch, or backward from the one closing it when the stretch starts the window.

    Raises:
        DetectionError: If the whole window is unassigned.
    """

    lo, hi = partial.window
    fragments = []
    for start, stop in _gaps(partial.phi_hat, lo):
        if start > lo:
            fragments += detect_short(markov, cluster, start, Direction.FORWARD, stop, tol, ambiguity_tol)
        elif stop < hi:
            fragments += detect_short(markov, cluster, stop + 1, Direction.BACKWARD, start, tol, ambiguity_tol)
        else:
            raise DetectionError(
                f"No known boundary switch: the whole window [{lo}, {hi}] is unassigned"
            )
    logger.info(
        "Signature detection: %d fragments over %d unassigned indices",
        len(fragments),
        len(partial.unassigned),
    )
    return fragments


## ~ Merging


def _merge_key(fragment: SwitchFragment) -> Tuple[int, int]:
    return fragment.detector.priority, fragment.direction.value


def assemble_phi(
    fragments: Sequence[SwitchFragment], ss: StationarySet, cluster: ClusterResult
) -> SwitchEstimate:
    """
    Merge detector assignments over the window.

    The clustered intervals are labelled first, then fragments are applied detector by detector
    (MARKOV, CORRECTION, SIGNATURE), forward before backward. Within one detector a disagreement
    keeps the forward label; across detectors it is an error.

    Raises:
        ConflictError: If two detectors label one index differently.
    """

    lo, hi = ss.window
    phi = np.zeros(hi - lo + 1, dtype=np.int64)
    provenance = [""] * phi.size
    owner: List[Optional[Detector]] = [None] * phi.size

    for interval, label in zip(cluster.intervals, cluster.assignments):
        phi[interval.alpha - lo : interval.beta - lo + 1] = label
        for i in range(interval.alpha - lo, interval.beta - lo + 1):
            provenance[i] = "interval"

    ordered = sorted(fragments, key=_merge_key)
    for fragment in ordered:
        disagreed = False
        for k in range(max(fragment.start, lo), min(fragment.stop, hi) + 1):
            i = k - lo
            if phi[i] == 0:
                phi[i] = fragment.label
                provenance[i] = fragment.provenance
                owner[i] = fragment.detector
            elif phi[i] != fragment.label:
                if owner[i] == fragment.detector:
                    disagreed = True
                    continue
                raise ConflictError(
                    k,
                    f"label {phi[i]} ({provenance[i]})",
                    f"label {fragment.label} ({fragment.provenance})",
                )
        if disagreed:
            logger.warning(
                "%s disagrees with the forward pass on [%d, %d]; keeping the forward labels",
                fragment.provenance,
                fragment.start,
                fragment.stop,
            )

    estimate = SwitchEstimate(
        window=(lo, hi),
        phi_hat=phi,
        provenance=tuple(provenance),
        fragments=tuple(ordered),
    )
    logger.info(
        "Assembled φ̂: %d switches, %d unassigned indices",
        len(estimate.switches),
        len(estimate.unassigned),
    )
    return estimate


def detect_switches(
    real: LtvRealization,
    markov: MarkovSequence,
    ss: StationarySet,
    cluster: ClusterResult,
    runs: Sequence[LabeledRun],
    detection_tol: float = DETECTION_TOL,
    match_tol: float = MATCH_TOL,
    ambiguity_tol: float = AMBIGUITY_TOL,
) -> SwitchEstimate:
    """
    Markov matching, then correction operators, then Hankel signatures on whatever is left.
    """

    fragments = detect_markov(real, markov, runs, match_tol)
    fragments += detect_correction(real, runs, detection_tol)
    partial = assemble_phi(fragments, ss, cluster)
    if partial.is_complete:
        return partial
    fragments += detect_signature(markov, cluster, partial, match_tol, ambiguity_tol)
    return assemble_phi(fragments, ss, cluster)


## ~ Tolerance calibration


def stationary_deviations(real: LtvRealization, runs: Sequence[LabeledRun]) -> np.ndarray:
    """
    Returns:
        |M(V̂(k)) - n| and |M(Ŵ(k)) - n| at every k of the labelled runs.
    """

    values = []
    for run in runs:
        for k in range(run.interval.alpha, run.interval.beta + 1):
            if k in real.anchors:
                values.append(correction_deviation(real, k, Direction.FORWARD))
                values.append(correction_deviation(real, k, Direction.BACKWARD))
    return np.asarray(values)


def stationary_residuals(
    real: LtvRealization, markov: MarkovSequence, runs: Sequence[LabeledRun]
) -> np.ndarray:
    """
    Returns:
        Forward and backward matching residuals of each run's quadruple at the run's own indices.
    """

    values = []
    for run in runs:
        if run.label == 0 or run.interval.length < 2 * real.order - 1:
            continue
        quad = real.quad(run.interval.gamma)
        for l in range(run.interval.alpha, run.interval.beta + 1):
            values.append(match_forward(markov, quad, l).residual)
            values.append(match_backward(markov, quad, l).residual)
    return np.asarray(values)
