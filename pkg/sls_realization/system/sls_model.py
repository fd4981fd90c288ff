"""
Ground-truth switched linear systems.

A switched linear system (SLS) is a time-varying state-space model whose quadruple (A, B, C, D) jumps
among a finite set of discrete states according to a switching sequence. Time indices are 1-based
throughout the package, so that h(k, l) refers to the same instants as the state equations

    x(k+1) = A(k) x(k) + B(k) u(k),    y(k) = C(k) x(k) + D(k) u(k).
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from sls_realization.utils.errors import WindowError, check_horizon
from sls_realization.utils.stage import SegmentClass

logger = logging.getLogger(__name__)


def _frozen_matrix(value: Any, name: str) -> np.ndarray:
    matrix = np.array(value, dtype=float, copy=True)
    if matrix.ndim != 2:
        raise ValueError(f"Matrix {name} must be two-dimensional, got shape {matrix.shape}")
    matrix.setflags(write=False)
    return matrix


@dataclass(frozen=True, eq=False)
class Quadruple:
    """
    State-space quadruple (A, B, C, D) with A: n×n, B: n×m, C: p×n, D: p×m.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        for name in ("A", "B", "C", "D"):
            object.__setattr__(self, name, _frozen_matrix(getattr(self, name), name))
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise ValueError(f"A must be square, got shape {self.A.shape}")
        if self.B.shape[0] != n or self.C.shape[1] != n:
            raise ValueError(
                f"Inconsistent state dimension: A {self.A.shape}, B {self.B.shape}, C {self.C.shape}"
            )
        if self.D.shape != (self.C.shape[0], self.B.shape[1]):
            raise ValueError(
                f"D must have shape {(self.C.shape[0], self.B.shape[1])}, got {self.D.shape}"
            )

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]

    def similar(self, T: np.ndarray):
        """
        Args:
            T: Nonsingular n×n matrix.

        Returns:
            The quadruple (T⁻¹AT, T⁻¹B, CT, D), which has the same Markov parameters.
        """

        T = np.asarray(T, dtype=float)
        return dataclasses.replace(
            self,
            A=np.linalg.solve(T, self.A @ T),
            B=np.linalg.solve(T, self.B),
            C=self.C @ T,
            D=self.D,
        )

    def stacked(self) -> np.ndarray:
        return np.block([[self.A, self.B], [self.C, self.D]])

    def to_dict(self) -> Dict[str, Any]:
        return {name: getattr(self, name).tolist() for name in ("A", "B", "C", "D")}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]):
        return cls(**{name: data[name] for name in ("A", "B", "C", "D")})


@dataclass(frozen=True, eq=False)
class DiscreteState(Quadruple):
    """
    One submodel of the SLS, identified by its label in 1..σ.
    """

    label: int = 1

    def __post_init__(self):
        super().__post_init__()
        if int(self.label) < 1:
            raise ValueError(f"Discrete-state labels start at 1, got {self.label}")
        object.__setattr__(self, "label", int(self.label))

    def to_dict(self) -> Dict[str, Any]:
        data = super().to_dict()
        data["label"] = self.label
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> DiscreteState:
        return cls(
            **{name: data[name] for name in ("A", "B", "C", "D")},
            label=int(data.get("label", 1)),
        )


class Segment(NamedTuple):
    start: int
    stop: int
    label: int

    @property
    def length(self) -> int:
        return self.stop - self.start


@dataclass(frozen=True, eq=False)
class SwitchingSequence:
    """
    Label sequence φ(1), ..., φ(N), stored 0-based in `phi`.
    """

    phi: np.ndarray

    def __post_init__(self):
        phi = np.array(self.phi, dtype=np.int64, copy=True).reshape(-1)
        if phi.size == 0:
            raise ValueError("Switching sequence must not be empty")
        if np.any(phi < 1):
            raise ValueError("Discrete-state labels start at 1")
        phi.setflags(write=False)
        object.__setattr__(self, "phi", phi)

    @classmethod
    def from_segments(cls, segments: Sequence[Tuple[int, int]]) -> SwitchingSequence:
        """
        Args:
            segments: (label, length) pairs in time order.

        Returns:
            The switching sequence obtained by concatenating the segments.
        """

        labels = [int(label) for label, _ in segments]
        for previous, current in zip(labels, labels[1:]):
            if previous == current:
                raise ValueError(f"Adjacent segments share label {current}")
        return cls(np.concatenate([np.full(int(length), label) for label, length in segments]))

    @property
    def n_steps(self) -> int:
        return int(self.phi.size)

    def label_at(self, k: int) -> int:
        if not 1 <= k <= self.n_steps:
            raise WindowError(f"Time index k={k} outside [1, {self.n_steps}]")
        return int(self.phi[k - 1])

    @property
    def labels(self) -> Tuple[int, ...]:
        return tuple(int(label) for label in np.unique(self.phi))

    @property
    def switches(self) -> Tuple[int, ...]:
        """
        Switch instants k_1 < ... < k_{i*}, i.e. the 1-based times k with φ(k) ≠ φ(k-1).
        """

        return tuple(int(k) + 1 for k in np.flatnonzero(np.diff(self.phi)) + 1)

    @property
    def dwell(self) -> Tuple[int, ...]:
        """
        Dwell times δ_0 = k_1 - 1, δ_i = k_{i+1} - k_i and δ_{i*} = N - k_{i*}.
        """

        switches = self.switches
        if not switches:
            return (self.n_steps,)
        dwell = [switches[0] - 1]
        dwell.extend(b - a for a, b in zip(switches, switches[1:]))
        dwell.append(self.n_steps - switches[-1])
        return tuple(dwell)

    @property
    def min_dwell(self) -> Optional[int]:
        """
        δ_*, the minimum over interior segments, or None without interior segments.
        """

        interior = self.dwell[1:-1]
        return min(interior) if interior else None

    def segments(self) -> List[Segment]:
        bounds = [1, *self.switches, self.n_steps + 1]
        return [
            Segment(start, stop, self.label_at(start))
            for start, stop in zip(bounds[:-1], bounds[1:])
        ]

    def segment_classes(self, n: int) -> List[SegmentClass]:
        return [SegmentClass.from_dwell(segment.length, n) for segment in self.segments()]

    def to_dict(self) -> Dict[str, Any]:
        return {"phi": self.phi.tolist()}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> SwitchingSequence:
        return cls(data["phi"])


@dataclass(frozen=True, eq=False)
class SlsModel:
    states: Tuple[DiscreteState, ...]
    switching: SwitchingSequence

    def __post_init__(self):
        states = tuple(sorted(self.states, key=lambda state: state.label))
        if not states:
            raise ValueError("An SLS needs at least one discrete state")
        object.__setattr__(self, "states", states)

        labels = [state.label for state in states]
        if len(set(labels)) != len(labels):
            raise ValueError(f"Duplicate discrete-state labels: {labels}")
        dims = {(state.n, state.m, state.p) for state in states}
        if len(dims) != 1:
            raise ValueError(f"Discrete states disagree on (n, m, p): {sorted(dims)}")
        unknown = set(self.switching.labels) - set(labels)
        if unknown:
            raise ValueError(f"Switching sequence refers to unknown labels {sorted(unknown)}")
        check_horizon(self.n, self.n_steps)

        by_label = {state.label: state for state in states}
        object.__setattr__(self, "_by_label", by_label)
        # Per-time stacks, index 0 holds time 1
        for name in ("A", "B", "C", "D"):
            stack = np.stack([getattr(by_label[label], name) for label in self.switching.phi])
            stack.setflags(write=False)
            object.__setattr__(self, f"_{name}_seq", stack)

    @property
    def n(self) -> int:
        return self.states[0].n

    @property
    def m(self) -> int:
        return self.states[0].m

    @property
    def p(self) -> int:
        return self.states[0].p

    @property
    def n_steps(self) -> int:
        return self.switching.n_steps

    @property
    def sigma(self) -> int:
        return len(self.states)

    @property
    def dims(self) -> Tuple[int, int, int, int]:
        return self.n, self.m, self.p, self.n_steps

    def state(self, label: int) -> DiscreteState:
        try:
            return self._by_label[label]
        except KeyError:
            raise ValueError(f"Unknown discrete-state label: {label}") from None

    def sequence(self, name: str) -> np.ndarray:
        """
        Returns:
            The time-indexed stack of matrix `name` ("A", "B", "C" or "D"), index 0 is time 1.
        """

        return getattr(self, f"_{name}_seq")

    def to_dict(self) -> Dict[str, Any]:
        n, m, p, n_steps = self.dims
        return {
            "dims": {"n": n, "m": m, "p": p, "N": n_steps, "sigma": self.sigma},
            "states": [state.to_dict() for state in self.states],
            "switching": self.switching.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> SlsModel:
        return cls(
            states=tuple(DiscreteState.from_dict(state) for state in data["states"]),
            switching=SwitchingSequence.from_dict(data["switching"]),
        )


@dataclass(frozen=True, eq=False)
class MarkovSequence:
    """
    Doubly indexed Markov parameters h(k, l) stored as a dense band.

    `blocks[k-1, d]` holds h(k, k-d) for lags 0 ≤ d ≤ band. Entries with k - d < 1 are zero and never
    read. h(k, l) for l > k is zero by convention and is not stored.
    """

    blocks: np.ndarray
    order: int
    noise_bound: float = 0.0
    noise_std: float = 0.0

    def __post_init__(self):
        blocks = np.array(self.blocks, dtype=float, copy=True)
        if blocks.ndim != 4:
            raise ValueError(f"Markov blocks must have shape (N, L+1, p, m), got {blocks.shape}")
        blocks.setflags(write=False)
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "order", int(self.order))
        if self.noise_bound < 0.0 or self.noise_std < 0.0:
            raise ValueError("Noise levels must be nonnegative")
        check_horizon(self.order, self.n_steps)

    @property
    def n_steps(self) -> int:
        return self.blocks.shape[0]

    @property
    def band(self) -> int:
        return self.blocks.shape[1] - 1

    @property
    def is_full(self) -> bool:
        return self.band >= self.n_steps - 1

    @property
    def p(self) -> int:
        return self.blocks.shape[2]

    @property
    def m(self) -> int:
        return self.blocks.shape[3]

    @property
    def is_exact(self) -> bool:
        return self.noise_bound == 0.0 and self.noise_std == 0.0

    @property
    def window(self) -> Tuple[int, int]:
        """
        Anchor window [k', k''] = [2n+1, N-4n] of the (2n+1, 2n) Hankel matrices.
        """

        return 2 * self.order + 1, self.n_steps - 4 * self.order

    def block(self, k: int, l: int) -> np.ndarray:
        if not (1 <= l and k <= self.n_steps):
            raise WindowError(f"Markov index (k={k}, l={l}) outside 1 ≤ l, k ≤ {self.n_steps}")
        if l > k:
            return np.zeros((self.p, self.m))
        lag = k - l
        if lag > self.band:
            raise WindowError(
                f"Markov lag k-l={lag} exceeds the stored band L={self.band}"
            )
        return self.blocks[k - 1, lag]

    def valid_mask(self) -> np.ndarray:
        """
        Returns:
            Boolean (N, L+1) mask of the stored entries with l = k - d ≥ 1.
        """

        k = np.arange(1, self.n_steps + 1)[:, None]
        d = np.arange(self.band + 1)[None, :]
        return k - d >= 1

    def with_blocks(
        self, blocks: np.ndarray, noise_bound: float = None, noise_std: float = None
    ) -> MarkovSequence:
        return MarkovSequence(
            blocks=blocks,
            order=self.order,
            noise_bound=self.noise_bound if noise_bound is None else noise_bound,
            noise_std=self.noise_std if noise_std is None else noise_std,
        )


def _check_times(n_steps: int, k: int, l: int):
    if not (1 <= l <= k <= n_steps):
        raise WindowError(f"Time indices must satisfy 1 ≤ l ≤ k ≤ {n_steps}, got k={k}, l={l}")


def state_transition(model: SlsModel, k: int, l: int) -> np.ndarray:
    """
    Args:
        model: The SLS.
        k: Final time.
        l: Initial time, l ≤ k.

    Returns:
        Φ(k, l) = A(k-1)···A(l), the identity for k = l.
    """

    _check_times(model.n_steps, k, l)
    a_seq = model.sequence("A")
    phi = np.eye(model.n)
    for j in range(l, k):
        phi = a_seq[j - 1] @ phi
    return phi


def markov(model: SlsModel, k: int, l: int) -> np.ndarray:
    """
    Args:
        model: The SLS.
        k: Output time.
        l: Input time.

    Returns:
        h(k, l) = C(k) Φ(k, l+1) B(l) for k > l, D(k) for k = l, zero for k < l.
    """

    if not (1 <= l and 1 <= k <= model.n_steps and l <= model.n_steps):
        raise WindowError(f"Time indices must lie in [1, {model.n_steps}], got k={k}, l={l}")
    if l > k:
        return np.zeros((model.p, model.m))
    if k == l:
        return np.array(model.sequence("D")[k - 1])
    a_seq = model.sequence("A")
    v = model.sequence("B")[l - 1]
    for j in range(l + 1, k):
        v = a_seq[j - 1] @ v
    return model.sequence("C")[k - 1] @ v


def generate_markov(model: SlsModel, band: Optional[int] = None) -> MarkovSequence:
    """
    Exact Markov parameters of the model.

    Storage is O(N·L) for a band of L lags and O(N²) for the full triangle (`band=None`). The
    realization stages need L = 4n; the band is vectorized over the input time l, one lag at a
    time.

    Args:
        model: The SLS.
        band: Largest stored lag k-l, or None for all lags.

    Returns:
        The exact Markov sequence with noise_bound = 0.
    """

    n_steps, p, m = model.n_steps, model.p, model.m
    band = n_steps - 1 if band is None else min(int(band), n_steps - 1)
    if band < 0:
        raise ValueError(f"Band must be nonnegative, got {band}")

    a_seq, b_seq, c_seq, d_seq = (model.sequence(name) for name in ("A", "B", "C", "D"))
    blocks = np.zeros((n_steps, band + 1, p, m))
    blocks[:, 0] = d_seq

    # v[l-1] = A(k-1)···A(l+1) B(l) for the current lag d = k - l
    v = np.array(b_seq)
    for lag in range(1, band + 1):
        count = n_steps - lag
        if lag > 1:
            v = np.matmul(a_seq[lag - 1 : lag - 1 + count], v[:count])
        blocks[lag:, lag] = np.matmul(c_seq[lag:], v[:count])

    logger.debug("Generated Markov parameters for N=%d with band L=%d", n_steps, band)
    return MarkovSequence(blocks=blocks, order=model.n)


def _inputs_array(model: SlsModel, start: int, inputs: Any) -> np.ndarray:
    inputs = np.asarray(inputs, dtype=float)
    if inputs.ndim == 1 and model.m == 1:
        inputs = inputs[:, None]
    if inputs.ndim != 2 or inputs.shape[1] != model.m:
        raise ValueError(f"Inputs must have shape (T, {model.m}), got {inputs.shape}")
    stop = start + inputs.shape[0] - 1
    if start < 1 or stop > model.n_steps:
        raise WindowError(f"Input span [{start}, {stop}] outside [1, {model.n_steps}]")
    return inputs


def _initial_state(model: SlsModel, x0: Any) -> np.ndarray:
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape != (model.n,):
        raise ValueError(f"Initial state must have {model.n} entries, got {x0.shape[0]}")
    return x0


def simulate(model: SlsModel, x0: Any, start: int, inputs: Any) -> np.ndarray:
    """
    Args:
        model: The SLS.
        x0: State x(start).
        start: Time of the first input sample.
        inputs: (T, m) inputs u(start), ..., u(start+T-1).

    Returns:
        (T, p) outputs y(start), ..., y(start+T-1) from the state recursion.
    """

    inputs = _inputs_array(model, start, inputs)
    x = _initial_state(model, x0)
    a_seq, b_seq, c_seq, d_seq = (model.sequence(name) for name in ("A", "B", "C", "D"))
    outputs = np.empty((inputs.shape[0], model.p))
    for j, u in enumerate(inputs):
        k = start + j - 1
        outputs[j] = c_seq[k] @ x + d_seq[k] @ u
        x = a_seq[k] @ x + b_seq[k] @ u
    return outputs


def response(model: SlsModel, x0: Any, start: int, inputs: Any) -> np.ndarray:
    """
    Convolution form y(k) = C(k)Φ(k, l)x(l) + Σ_{j=l}^{k} h(k, j)u(j) of the response.
    Quadratic in the span; used to cross-check `simulate`.
    """

    inputs = _inputs_array(model, start, inputs)
    x0 = _initial_state(model, x0)
    c_seq = model.sequence("C")
    outputs = np.empty((inputs.shape[0], model.p))
    for i in range(inputs.shape[0]):
        k = start + i
        y = c_seq[k - 1] @ state_transition(model, k, start) @ x0
        for j in range(start, k + 1):
            y = y + markov(model, k, j) @ inputs[j - start]
        outputs[i] = y
    return outputs
