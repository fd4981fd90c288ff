"""
Model sources: the three-state reference example, random submodels, random switching sequences and
excitation signals.

Every random draw goes through `numpy.random.Generator` (PCG64). Independent streams for repeated
experiments are obtained with `numpy.random.SeedSequence.spawn`, see `utils.montecarlo`.
"""

import logging
from collections import Counter
from typing import List, Optional, Tuple, Union

import numpy as np

from sls_realization.system.assumptions import Assumption, check_state_assumptions
from sls_realization.system.sls_model import DiscreteState, SwitchingSequence
from sls_realization.utils.errors import ResamplingError, SizingError, check_horizon
from sls_realization.utils.linalg import spectral_radius
from sls_realization.utils.stage import SegmentClass

logger = logging.getLogger(__name__)

SeedLike = Union[None, int, np.random.SeedSequence, np.random.Generator]


def make_rng(seed: SeedLike = None) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def three_state_example() -> Tuple[DiscreteState, ...]:
    """
    Returns:
        The three-state MIMO reference example with n=3, m=2, p=2.
    """

    return (
        DiscreteState(
            A=[[0.15, 0.40, -0.65], [-0.75, 0.10, -0.35], [0.20, 0.70, 0.20]],
            B=[[-0.20, 0.45], [-0.06, 0.0], [0.22, 0.0]],
            C=[[0.0, 0.40, 0.45], [-1.0, -0.60, 0.90]],
            D=[[0.0, -0.35], [-1.70, -0.25]],
            label=1,
        ),
        DiscreteState(
            A=[[0.27, 0.24, -0.55], [0.24, 0.65, 0.30], [-0.55, 0.30, 0.27]],
            B=[[-0.55, 0.0], [-1.40, 1.0], [0.05, -0.72]],
            C=[[0.70, 1.0, -0.27], [-0.35, 0.0, -1.10]],
            D=[[2.15, 0.25], [0.0, -0.36]],
            label=2,
        ),
        DiscreteState(
            A=[[0.45, 0.02, 0.42], [-0.17, 0.53, 0.20], [0.38, 0.26, 0.0]],
            B=[[0.0, 0.15], [0.27, -0.46], [0.07, 0.54]],
            C=[[0.0, 0.60, 0.28], [0.0, 0.86, 0.45]],
            D=[[0.0, -0.90], [0.0, 0.85]],
            label=3,
        ),
    )


def mixed_switching(n: int = 3) -> SwitchingSequence:
    """
    Deterministic switching sequence over three labels with long, short and very short segments.
    Every label owns at least one segment long enough to be clustered; the first and last segments
    keep every switch inside the anchor window.

    Args:
        n: State dimension the segment classes refer to.

    Returns:
        Switching sequence of length 109n + 26.
    """

    long_, short, very_short = 12 * n + 4, 5 * n + 1, 3 * n + 1
    return SwitchingSequence.from_segments(
        [
            (1, 14 * n + 4),
            (2, long_),
            (3, long_),
            (1, short),
            (2, long_),
            (3, very_short),
            (1, 8 * n),
            (3, short),
            (2, very_short),
            (1, long_ - 2),
            (2, 2 * n + 1),
            (3, 7 * n + 1),
            (2, 14 * n + 2),
        ]
    )


def multisine(
    n_steps: int,
    m: int,
    n_frequencies: int = 6,
    amplitude: float = 1.0,
    seed: SeedLike = None,
) -> np.ndarray:
    """
    Sum of sinusoids with random phases on distinct frequency bins, one independent signal per
    input channel.

    Returns:
        (N, m) input sequence.
    """

    rng = make_rng(seed)
    k = np.arange(n_steps)[:, None]
    signal = np.zeros((n_steps, m))
    for channel in range(m):
        bins = rng.choice(np.arange(1, max(n_frequencies + 1, n_steps // 8)), n_frequencies, replace=False)
        phases = rng.uniform(0.0, 2.0 * np.pi, n_frequencies)
        waves = np.sin(2.0 * np.pi * k * bins[None, :] / n_steps + phases[None, :])
        signal[:, channel] = amplitude * waves.sum(axis=1) / np.sqrt(n_frequencies)
    return signal


def _random_state(
    rng: np.random.Generator, n: int, m: int, p: int, margin: float, label: int
) -> DiscreteState:
    a = rng.standard_normal((n, n))
    radius = spectral_radius(a)
    if radius > 1.0 - margin:
        a *= rng.uniform(0.5 * (1.0 - margin), 1.0 - margin) / radius
    return DiscreteState(
        A=a,
        B=rng.standard_normal((n, m)),
        C=rng.standard_normal((p, n)),
        D=rng.standard_normal((p, m)),
        label=label,
    )


def random_sls(
    n: int,
    m: int,
    p: int,
    sigma: int,
    margin: float = 0.1,
    separation: float = 0.05,
    seed: SeedLike = None,
    pole_floor: float = 0.05,
    budget: int = 2000,
) -> Tuple[DiscreteState, ...]:
    """
    Random submodels with Gaussian entries.

    Each A is rescaled into the disc of radius 1 - margin. Candidates are resampled until the
    stable-minimal, unimodal, correction-detectable, Markov-detectable and nonzero-pole checks pass
    against every previously accepted state.

    Args:
        n: State dimension.
        m: Number of inputs.
        p: Number of outputs.
        sigma: Number of discrete states.
        margin: Stability margin in (0, 1).
        separation: Minimum pairwise gap of the eigenvalue feature M.
        seed: Seed or generator.
        pole_floor: Minimum modulus of every pole.
        budget: Maximum number of rejected candidates.

    Returns:
        The σ discrete states, labelled 1..σ.
    """

    if sigma < 1:
        raise ValueError(f"Need at least one discrete state, got sigma={sigma}")
    if not 0.0 < margin < 1.0:
        raise ValueError(f"Stability margin must lie in (0, 1), got {margin}")

    rng = make_rng(seed)
    accepted: List[DiscreteState] = []
    rejections: Counter = Counter()
    while len(accepted) < sigma:
        candidate = _random_state(rng, n, m, p, margin, label=len(accepted) + 1)
        report = check_state_assumptions(
            accepted + [candidate],
            which=(
                Assumption.STABLE_MINIMAL,
                Assumption.UNIMODAL,
                Assumption.CORRECTION_DETECTABLE,
                Assumption.MARKOV_DETECTABLE,
                Assumption.NONZERO_POLES,
            ),
            unimodal_tol=separation,
            pole_tol=pole_floor,
        )
        if report.passed:
            accepted.append(candidate)
            continue
        rejections.update(report.failed())
        if sum(rejections.values()) > budget:
            worst = rejections.most_common(1)[0][0]
            raise ResamplingError(
                f"Resampling budget of {budget} exhausted after {len(accepted)} of {sigma} states; "
                f"most frequently violated assumption: {worst.to_str()}"
            )
    logger.debug("Sampled %d random submodels after %d rejections", sigma, sum(rejections.values()))
    return tuple(accepted)


def _next_label(rng: np.random.Generator, sigma: int, previous: Optional[int]) -> int:
    choices = [label for label in range(1, sigma + 1) if label != previous]
    return int(rng.choice(choices))


def _class_range(segment_class: SegmentClass, n: int, ceiling: int) -> Tuple[int, int]:
    if segment_class == SegmentClass.LONG:
        return 6 * n + 1, max(6 * n + 1, ceiling)
    elif segment_class == SegmentClass.SHORT:
        return 4 * n + 2, 6 * n
    elif segment_class == SegmentClass.VERY_SHORT:
        return 2 * n + 1, 4 * n + 1
    else:
        raise ValueError(f"Cannot sample segments of class {segment_class.to_str()}")


def random_switching(
    n_steps: int,
    sigma: int,
    dwell_floor: int,
    seed: SeedLike = None,
    dwell_ceiling: Optional[int] = None,
    mixed_order: Optional[int] = None,
) -> SwitchingSequence:
    """
    Random switching sequence.

    Labels are drawn uniformly among those different from the previous segment; the first σ
    segments visit every label once. Segment lengths are uniform on [dwell_floor, dwell_ceiling].

    With `mixed_order=n` the sequence mixes long (≥ 6n+1), short (4n+2 .. 6n) and very short
    (2n+1 .. 4n+1) segments. The first σ segments and the last one are then at least
    `dwell_floor` long, which should be large enough for every label to be clustered.

    Args:
        n_steps: Horizon N.
        sigma: Number of labels.
        dwell_floor: Minimum length of ordinary segments.
        seed: Seed or generator.
        dwell_ceiling: Maximum length of ordinary segments, 3·dwell_floor by default.
        mixed_order: State dimension n enabling the three-class mode.

    Returns:
        The switching sequence.
    """

    if dwell_floor < 1:
        raise ValueError(f"Dwell floor must be positive, got {dwell_floor}")
    if sigma < 1:
        raise ValueError(f"Need at least one label, got sigma={sigma}")
    if mixed_order is not None:
        check_horizon(mixed_order, n_steps)
    ceiling = dwell_ceiling if dwell_ceiling is not None else 3 * dwell_floor
    if ceiling < dwell_floor:
        raise ValueError(f"Dwell ceiling {ceiling} below floor {dwell_floor}")
    if sigma * dwell_floor > n_steps:
        raise SizingError(
            f"{sigma} segments of length ≥ {dwell_floor} cannot fit in N={n_steps}"
        )
    rng = make_rng(seed)
    if sigma == 1:
        return SwitchingSequence(np.ones(n_steps, dtype=np.int64))

    labels = [int(label) for label in rng.permutation(np.arange(1, sigma + 1))]
    segments = [(label, int(rng.integers(dwell_floor, ceiling + 1))) for label in labels]
    if mixed_order is None:
        while sum(length for _, length in segments) < n_steps:
            segments.append(
                (_next_label(rng, sigma, segments[-1][0]), int(rng.integers(dwell_floor, ceiling + 1)))
            )
        return _fit_segments(segments, n_steps, dwell_floor)

    n = mixed_order
    pending: List[SegmentClass] = []
    seen = set()
    total = sum(length for _, length in segments)
    while True:
        if not pending:
            pending = [SegmentClass.LONG, SegmentClass.SHORT, SegmentClass.VERY_SHORT]
            rng.shuffle(pending)
        segment_class = pending.pop()
        low, high = _class_range(segment_class, n, ceiling)
        length = int(rng.integers(low, high + 1))
        if total + length > n_steps - dwell_floor:
            break
        segments.append((_next_label(rng, sigma, segments[-1][0]), length))
        seen.add(segment_class)
        total += length
    if len(seen) < 3:
        raise SizingError(
            f"N={n_steps} is too short to host long, short and very short segments after "
            f"{sigma} segments of length ≥ {dwell_floor}"
        )
    segments.append((_next_label(rng, sigma, segments[-1][0]), n_steps - total))
    return SwitchingSequence.from_segments(segments)


def _fit_segments(
    segments: List[Tuple[int, int]], n_steps: int, dwell_floor: int
) -> SwitchingSequence:
    """
    Trim or pad `segments` to exactly `n_steps` samples. Segments are shortened from the end down
    to `dwell_floor`; the last one is dropped when the floors alone exceed the horizon.
    """

    if len(segments) * dwell_floor > n_steps:
        segments.pop()
    overshoot = sum(length for _, length in segments) - n_steps
    if overshoot < 0:
        label, length = segments[-1]
        segments[-1] = (label, length - overshoot)
    for i in reversed(range(len(segments))):
        if overshoot <= 0:
            break
        label, length = segments[i]
        cut = min(overshoot, length - dwell_floor)
        segments[i] = (label, length - cut)
        overshoot -= cut
    return SwitchingSequence.from_segments(segments)
