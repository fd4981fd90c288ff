"""
Time-indexed block Hankel matrices of Markov parameters.

H_{q,r}(k) has block (s, t) = h(k+s-1, k-t) for 1 ≤ s ≤ q, 1 ≤ t ≤ r and factors as O_q(k)·R_r(k-1),
the extended observability and controllability matrices of the time-varying system. The pipeline
uses q = 2n+1, r = 2n, whose anchor window is [2n+1, N-4n]; short-segment tests use q = n+1, r = n.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg

from sls_realization.system.assumptions import controllability_matrix, observability_matrix
from sls_realization.system.generators import SeedLike, make_rng
from sls_realization.system.sls_model import MarkovSequence, Quadruple
from sls_realization.utils.errors import RankDeficiencyError, WindowError
from sls_realization.utils.linalg import RANK_TOL, pinv, signed_svd
from sls_realization.utils.stage import NoiseMode

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class HankelMatrix:
    k: int
    q: int
    r: int
    p: int
    m: int
    data: np.ndarray

    def block(self, s: int, t: int) -> np.ndarray:
        """
        Returns:
            Block (s, t), 1-based, equal to h(k+s-1, k-t).
        """

        return self.data[(s - 1) * self.p : s * self.p, (t - 1) * self.m : t * self.m]

    def rows(self, first: int, count: int) -> np.ndarray:
        """
        Returns:
            Block rows first..first+count-1 (1-based).
        """

        return self.data[(first - 1) * self.p : (first - 1 + count) * self.p]


@dataclass(frozen=True, eq=False)
class ObsCtrlPair:
    """
    Rank-n factors O_q (q·p × n) and R_r (n × r·m) of a Hankel matrix.
    """

    obs: np.ndarray
    ctrl: np.ndarray
    singular_values: Optional[np.ndarray] = None

    @property
    def n(self) -> int:
        return self.obs.shape[1]

    def product(self) -> np.ndarray:
        return self.obs @ self.ctrl

    def gramians(self) -> Tuple[np.ndarray, np.ndarray]:
        return gramians(self.obs, self.ctrl)


def hankel_window(markov: MarkovSequence, q: int, r: int) -> Tuple[int, int]:
    """
    Returns:
        The admissible anchors [r+1, N-q+1] of H_{q,r}(k).
    """

    return r + 1, markov.n_steps - q + 1


def _check_anchor(markov: MarkovSequence, q: int, r: int, k: int):
    lo, hi = hankel_window(markov, q, r)
    if not lo <= k <= hi:
        raise WindowError(
            f"Hankel anchor k={k} outside [{lo}, {hi}] for q={q}, r={r}, N={markov.n_steps} "
            f"(needs k > r and k + q - 1 ≤ N)"
        )
    if q + r - 1 > markov.band:
        raise WindowError(
            f"H_{{{q},{r}}} needs Markov lags up to {q + r - 1}, the band stores {markov.band}"
        )


def build(markov: MarkovSequence, q: int, r: int, k: int) -> HankelMatrix:
    _check_anchor(markov, q, r, k)
    p, m = markov.p, markov.m
    s = np.arange(1, q + 1)[:, None]
    t = np.arange(1, r + 1)[None, :]
    # blocks[k+s-2, s+t-1] = h(k+s-1, k-t)
    grid = markov.blocks[k + s - 2, s + t - 1]
    data = grid.transpose(0, 2, 1, 3).reshape(q * p, r * m)
    return HankelMatrix(k=k, q=q, r=r, p=p, m=m, data=data)


def advance(hankel: HankelMatrix, markov: MarkovSequence) -> HankelMatrix:
    """
    H_{q,r}(k+1) from H_{q,r}(k): the shared (q-1)×(r-1) block submatrix is shifted and only the
    q + r - 1 new Markov blocks are fetched.
    """

    q, r, p, m, k = hankel.q, hankel.r, hankel.p, hankel.m, hankel.k
    _check_anchor(markov, q, r, k + 1)
    data = np.empty_like(hankel.data)
    data[: (q - 1) * p, m:] = hankel.data[p:, : (r - 1) * m]
    for s in range(1, q + 1):
        data[(s - 1) * p : s * p, :m] = markov.block(k + s, k)
    for t in range(2, r + 1):
        data[(q - 1) * p :, (t - 1) * m : t * m] = markov.block(k + q, k + 1 - t)
    return HankelMatrix(k=k + 1, q=q, r=r, p=p, m=m, data=data)


def gramians(obs: np.ndarray, ctrl: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Returns:
        (G_o, G_c) = (OᵀO, RRᵀ).
    """

    obs, ctrl = np.asarray(obs), np.asarray(ctrl)
    if obs.shape[1] != ctrl.shape[0]:
        raise ValueError(f"Factor shapes {obs.shape} and {ctrl.shape} do not chain")
    return obs.T @ obs, ctrl @ ctrl.T


def factorize(hankel: HankelMatrix, n: int, rank_tol: float = RANK_TOL) -> ObsCtrlPair:
    """
    Rank-n factorization from the truncated SVD, splitting Σ^{1/2} evenly between the factors.

    Raises:
        RankDeficiencyError: If σ_n ≤ rank_tol·σ_1.
    """

    u, s, vt = signed_svd(hankel.data)
    if n > s.size or s[0] == 0.0 or s[n - 1] <= rank_tol * s[0]:
        smallest = s[n - 1] if n <= s.size else 0.0
        raise RankDeficiencyError(
            f"H_{{{hankel.q},{hankel.r}}}({hankel.k}) has numerical rank below n={n}: "
            f"σ_n={smallest:.3g}, σ_1={s[0]:.3g}"
        )
    root = np.sqrt(s[:n])
    return ObsCtrlPair(obs=u[:, :n] * root, ctrl=root[:, None] * vt[:n], singular_values=s)


def state_matrix_from_controllability(ctrl_k: np.ndarray, ctrl_km1: np.ndarray, m: int) -> np.ndarray:
    """
    Shift identity on the controllability side: A(k) = J_← R_r(k) · (R_{r-1}(k-1))†, where J_← drops
    the first block column.

    Args:
        ctrl_k: R_r(k), n × r·m.
        ctrl_km1: R_r(k-1), n × r·m, in the same state basis as ctrl_k.
        m: Number of inputs.

    Returns:
        The n×n state matrix A(k) in that basis.
    """

    r_cols = ctrl_km1.shape[1]
    return ctrl_k[:, m:] @ pinv(ctrl_km1[:, : r_cols - m])


## ~ LTI Hankel matrices


def lti_hankel(state: Quadruple, q: int, r: int) -> np.ndarray:
    return observability_matrix(state, q) @ controllability_matrix(state, r)


def hankel_sigma_min(state: Quadruple, q: int, r: int) -> float:
    """
    Returns:
        The smallest nonzero (n-th) singular value of the LTI Hankel matrix of `state`.
    """

    s = scipy.linalg.svd(lti_hankel(state, q, r), compute_uv=False)
    return float(s[state.n - 1])


def sigma_min_table(states: Sequence[Quadruple]) -> Dict[str, Tuple[float, ...]]:
    """
    Returns:
        σ_min of every submodel for the (2n+1, 2n) and the (n+1, n) Hankel sizing, keyed by sizing.
    """

    n = states[0].n
    return {
        f"{2 * n + 1}x{2 * n}": tuple(hankel_sigma_min(state, 2 * n + 1, 2 * n) for state in states),
        f"{n + 1}x{n}": tuple(hankel_sigma_min(state, n + 1, n) for state in states),
    }


## ~ Noise


def add_noise(
    markov: MarkovSequence,
    mode: Union[NoiseMode, str],
    level: float,
    seed: SeedLike = None,
) -> MarkovSequence:
    """
    Perturb every stored Markov block.

    Args:
        markov: Markov parameters.
        mode: `NoiseMode.AMPLITUDE` adds blocks drawn uniformly from the Frobenius ball of radius
              `level`; `NoiseMode.SNR` adds i.i.d. Gaussian entries so that the signal-to-noise
              ratio over the stored band equals `level` dB; `NoiseMode.NONE` returns the input.
        level: ε for the amplitude mode, the SNR in dB for the SNR mode.
        seed: Seed or generator.

    Returns:
        The perturbed sequence with its noise level recorded.
    """

    if isinstance(mode, str):
        mode = NoiseMode.from_str(mode)
    if mode.is_none() or (mode.is_amplitude() and level == 0.0):
        return markov

    rng = make_rng(seed)
    shape = markov.blocks.shape
    valid = markov.valid_mask()[:, :, None, None]
    p, m = markov.p, markov.m

    if mode.is_amplitude():
        if level < 0.0:
            raise ValueError(f"Noise bound must be nonnegative, got {level}")
        direction = rng.standard_normal(shape)
        direction /= np.linalg.norm(direction, axis=(2, 3), keepdims=True)
        radius = level * rng.uniform(size=shape[:2]) ** (1.0 / (p * m))
        noise = np.where(valid, direction * radius[:, :, None, None], 0.0)
        noise_std = level / np.sqrt(p * m + 2.0)
    else:
        if not np.isfinite(level):
            raise ValueError(f"SNR must be finite, got {level}")
        signal_power = float(np.mean(markov.blocks[np.broadcast_to(valid, shape)] ** 2))
        noise_std = float(np.sqrt(signal_power / 10.0 ** (level / 10.0)))
        noise = np.where(valid, rng.standard_normal(shape) * noise_std, 0.0)

    largest = float(np.max(np.linalg.norm(noise, axis=(2, 3))))
    noise_bound = float(level) if mode.is_amplitude() else largest
    logger.debug(
        "Added %s noise: level=%g, max block norm=%.3g", mode.to_str(), level, largest
    )
    return markov.with_blocks(
        markov.blocks + noise,
        noise_bound=markov.noise_bound + noise_bound,
        noise_std=float(np.hypot(markov.noise_std, noise_std)),
    )
