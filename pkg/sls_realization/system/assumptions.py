"""
Numerical checks of the structural assumptions the realization stages rely on.

Failures are report entries, never exceptions.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from sls_realization.system.sls_model import DiscreteState, Quadruple, SlsModel
from sls_realization.utils.linalg import (
    RANK_TOL,
    feature_M,
    numerical_rank,
    pinv,
    spectral_radius,
)

UNIMODAL_TOL: float = 1e-6
DETECTABILITY_TOL: float = 1e-6
DISTINCT_TOL: float = 1e-6
POLE_TOL: float = 1e-6


@enum.unique
class Assumption(enum.Enum):
    """
    Structural assumption on the submodels and the switching sequence.
    """

    STABLE_MINIMAL = enum.auto()
    MIN_DWELL = enum.auto()
    UNIMODAL = enum.auto()
    VISITED = enum.auto()
    CORRECTION_DETECTABLE = enum.auto()
    MARKOV_DETECTABLE = enum.auto()
    NONZERO_POLES = enum.auto()

    def from_str(name: str) -> Assumption:
        """
        Args:
            name: The name of the assumption.
                    Possible known options = [
                        "stable-minimal",
                        "min-dwell",
                        "unimodal",
                        "visited",
                        "correction-detectable",
                        "markov-detectable",
                        "nonzero-poles",
                    ]

        Returns:
            The assumption.
        """

        key = name.strip().lower().replace("-", "_")
        for assumption in Assumption:
            if assumption.name.lower() == key:
                return assumption
        raise ValueError(f"Unknown assumption: {name}")

    def to_str(self) -> str:
        return self.name.lower().replace("_", "-")

    def needs_switching(self) -> bool:
        """
        Returns:
            True if the assumption is about the switching sequence rather than the submodels alone.
        """

        return self in (Assumption.MIN_DWELL, Assumption.VISITED)


@dataclass(frozen=True)
class AssumptionCheck:
    assumption: Assumption
    passed: bool
    diagnostics: Tuple[str, ...] = ()


@dataclass(frozen=True)
class AssumptionReport:
    checks: Dict[Assumption, AssumptionCheck] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks.values())

    def failed(self) -> List[Assumption]:
        return [assumption for assumption, check in self.checks.items() if not check.passed]

    def __getitem__(self, assumption: Assumption) -> AssumptionCheck:
        return self.checks[assumption]

    def to_dict(self) -> Dict[str, Dict]:
        return {
            assumption.to_str(): {"passed": check.passed, "diagnostics": list(check.diagnostics)}
            for assumption, check in self.checks.items()
        }


## ~ LTI building blocks


def observability_matrix(state: Quadruple, q: int) -> np.ndarray:
    """
    Returns:
        [C; CA; ...; CA^(q-1)], the (q·p)×n extended observability matrix.
    """

    blocks = [state.C]
    for _ in range(q - 1):
        blocks.append(blocks[-1] @ state.A)
    return np.vstack(blocks)


def controllability_matrix(state: Quadruple, r: int) -> np.ndarray:
    """
    Returns:
        [B, AB, ..., A^(r-1)B], the n×(r·m) extended controllability matrix.
    """

    blocks = [state.B]
    for _ in range(r - 1):
        blocks.append(state.A @ blocks[-1])
    return np.hstack(blocks)


## ~ Per-assumption checks


def _check_stable_minimal(states: Sequence[DiscreteState], rank_tol: float) -> AssumptionCheck:
    diagnostics = []
    for state in states:
        radius = spectral_radius(state.A)
        if radius >= 1.0:
            diagnostics.append(f"state {state.label}: spectral radius {radius:.6g} ≥ 1")
        obs_rank = numerical_rank(observability_matrix(state, state.n), rank_tol)
        ctrl_rank = numerical_rank(controllability_matrix(state, state.n), rank_tol)
        if obs_rank < state.n:
            diagnostics.append(f"state {state.label}: observability rank {obs_rank} < {state.n}")
        if ctrl_rank < state.n:
            diagnostics.append(f"state {state.label}: controllability rank {ctrl_rank} < {state.n}")
    return AssumptionCheck(Assumption.STABLE_MINIMAL, not diagnostics, tuple(diagnostics))


def _check_unimodal(states: Sequence[DiscreteState], tol: float) -> AssumptionCheck:
    diagnostics = []
    features = {state.label: feature_M(state.A) for state in states}
    for a, b in itertools.combinations(states, 2):
        gap = abs(features[a.label] - features[b.label])
        if gap <= tol:
            diagnostics.append(
                f"states ({a.label}, {b.label}): feature gap {gap:.3g} ≤ {tol:.3g}"
            )
    return AssumptionCheck(Assumption.UNIMODAL, not diagnostics, tuple(diagnostics))


def _check_nonzero_poles(states: Sequence[DiscreteState], tol: float) -> AssumptionCheck:
    diagnostics = []
    for state in states:
        smallest = float(np.min(np.abs(scipy.linalg.eigvals(state.A))))
        if smallest <= tol:
            diagnostics.append(f"state {state.label}: smallest pole modulus {smallest:.3g}")
    return AssumptionCheck(Assumption.NONZERO_POLES, not diagnostics, tuple(diagnostics))


def correction_deviations(before: Quadruple, after: Quadruple) -> Tuple[float, float]:
    """
    Deviations |M(·) - n| of the forward and backward correction operators of an ideal switch
    from `before` to `after`.

    Returns:
        (forward, backward) deviations.
    """

    n = before.n
    eye = np.eye(n)

    power = np.linalg.matrix_power(before.A, 2 * n)
    obs = observability_matrix(before, 2 * n + 1)
    gramian_o = obs.T @ obs
    forward = eye + pinv(gramian_o) @ power.T @ before.C.T @ (after.C - before.C) @ power

    power = np.linalg.matrix_power(after.A, 2 * n - 1)
    ctrl = controllability_matrix(after, 2 * n)
    gramian_c = ctrl @ ctrl.T
    backward = eye + power @ (before.B - after.B) @ after.B.T @ power.T @ pinv(gramian_c)

    return abs(feature_M(forward) - n), abs(feature_M(backward) - n)


def _check_correction_detectable(
    states: Dict[int, DiscreteState], pairs: Iterable[Tuple[int, int]], tol: float
) -> AssumptionCheck:
    diagnostics = []
    for j1, j2 in pairs:
        forward, backward = correction_deviations(states[j1], states[j2])
        if forward <= tol:
            diagnostics.append(f"switch {j1}->{j2}: forward correction deviation {forward:.3g}")
        if backward <= tol:
            diagnostics.append(f"switch {j1}->{j2}: backward correction deviation {backward:.3g}")
    return AssumptionCheck(Assumption.CORRECTION_DETECTABLE, not diagnostics, tuple(diagnostics))


def _check_markov_detectable(
    states: Dict[int, DiscreteState], pairs: Iterable[Tuple[int, int]], tol: float
) -> AssumptionCheck:
    diagnostics = []
    for j1, j2 in pairs:
        a, b = states[j1], states[j2]
        rows = np.linalg.norm(np.hstack([a.C, a.D]) - np.hstack([b.C, b.D]))
        cols = np.linalg.norm(np.vstack([a.B, a.D]) - np.vstack([b.B, b.D]))
        if rows <= tol:
            diagnostics.append(f"switch {j1}->{j2}: [C D] rows coincide")
        if cols <= tol:
            diagnostics.append(f"switch {j1}->{j2}: [B; D] columns coincide")
    return AssumptionCheck(Assumption.MARKOV_DETECTABLE, not diagnostics, tuple(diagnostics))


def _check_min_dwell(model: SlsModel) -> AssumptionCheck:
    min_dwell = model.switching.min_dwell
    if min_dwell is not None and min_dwell < model.n:
        return AssumptionCheck(
            Assumption.MIN_DWELL, False, (f"minimum dwell {min_dwell} < n={model.n}",)
        )
    return AssumptionCheck(Assumption.MIN_DWELL, True)


def stationary_margin(model: SlsModel) -> int:
    """
    N_S = min(δ_0 - 6n - 1, δ_* - 4n - 1, δ_{i*} - 8n), the guaranteed length of the shortest
    stationary stretch; the window length N - 6n without switches.
    """

    n, dwell = model.n, model.switching.dwell
    if len(dwell) == 1:
        return model.n_steps - 6 * n
    candidates = [dwell[0] - 6 * n - 1, dwell[-1] - 8 * n]
    if len(dwell) > 2:
        candidates.append(min(dwell[1:-1]) - 4 * n - 1)
    return min(candidates)


def _check_visited(model: SlsModel) -> AssumptionCheck:
    diagnostics = []
    n_steps, n = model.n_steps, model.n
    window = model.switching.phi[2 * n : n_steps - 4 * n]
    missing = sorted(set(state.label for state in model.states) - set(window.tolist()))
    if missing:
        diagnostics.append(f"states {missing} never active in the anchor window")
    margin = stationary_margin(model)
    if margin <= 5 * n:
        diagnostics.append(f"N_S = {margin} ≤ 5n = {5 * n}")
    return AssumptionCheck(Assumption.VISITED, not diagnostics, tuple(diagnostics))


def check_state_assumptions(
    states: Sequence[DiscreteState],
    which: Optional[Iterable[Assumption]] = None,
    pairs: Optional[Iterable[Tuple[int, int]]] = None,
    rank_tol: float = RANK_TOL,
    unimodal_tol: float = UNIMODAL_TOL,
    detectability_tol: float = DETECTABILITY_TOL,
    distinct_tol: float = DISTINCT_TOL,
    pole_tol: float = POLE_TOL,
) -> AssumptionReport:
    """
    Evaluate the submodel-level assumptions.

    Args:
        states: The discrete states.
        which: Assumptions to evaluate, all submodel-level ones by default.
        pairs: Ordered (before, after) label pairs to evaluate switch-level assumptions on.
               Every ordered pair of distinct labels by default.

    Returns:
        Report with one entry per evaluated assumption.
    """

    selected = [
        assumption
        for assumption in (which if which is not None else Assumption)
        if not assumption.needs_switching()
    ]
    by_label = {state.label: state for state in states}
    if pairs is None:
        pairs = list(itertools.permutations(by_label, 2))
    else:
        pairs = sorted(set((int(a), int(b)) for a, b in pairs))

    checks = {}
    for assumption in selected:
        if assumption == Assumption.STABLE_MINIMAL:
            checks[assumption] = _check_stable_minimal(states, rank_tol)
        elif assumption == Assumption.UNIMODAL:
            checks[assumption] = _check_unimodal(states, unimodal_tol)
        elif assumption == Assumption.CORRECTION_DETECTABLE:
            checks[assumption] = _check_correction_detectable(by_label, pairs, detectability_tol)
        elif assumption == Assumption.MARKOV_DETECTABLE:
            checks[assumption] = _check_markov_detectable(by_label, pairs, distinct_tol)
        elif assumption == Assumption.NONZERO_POLES:
            checks[assumption] = _check_nonzero_poles(states, pole_tol)
    return AssumptionReport(checks)


def check_assumptions(
    model: SlsModel, which: Optional[Iterable[Assumption]] = None, **tolerances
) -> AssumptionReport:
    """
    Evaluate the assumptions on a full model. Switch-level assumptions use the label pairs that
    actually occur at the switches of the model.

    Args:
        model: The SLS.
        which: Assumptions to evaluate, all by default.
        tolerances: Keyword tolerances forwarded to `check_state_assumptions`.

    Returns:
        Report with one entry per evaluated assumption.
    """

    selected = list(which) if which is not None else list(Assumption)
    phi = model.switching.phi
    pairs = [(int(phi[k - 2]), int(phi[k - 1])) for k in model.switching.switches]
    report = check_state_assumptions(model.states, selected, pairs=pairs, **tolerances)

    checks = dict(report.checks)
    if Assumption.MIN_DWELL in selected:
        checks[Assumption.MIN_DWELL] = _check_min_dwell(model)
    if Assumption.VISITED in selected:
        checks[Assumption.VISITED] = _check_visited(model)
    return AssumptionReport({assumption: checks[assumption] for assumption in selected})
