"""
Time-varying realization from the SVDs of consecutive Hankel matrices.

For each anchor k the factors of H(k) and H(k+1) give Ô(k), R̂(k-1) and Ô(k+1), R̂(k), and

    Â(k) = (J_↓ Ô(k+1))† J_↑ Ô(k),   Ĉ(k) = first block row of Ô(k),
    B̂(k) = first block column of R̂(k),   D̂(k) = h(k, k).

The result is topologically equivalent to the true system on the anchor window: it reproduces the
Markov parameters, while each Â(k) is only similar to a true A inside switch-free stretches.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Dict, Iterable, Optional, Tuple

import numpy as np

from sls_realization.realization.hankel import build, factorize
from sls_realization.system.sls_model import MarkovSequence, Quadruple
from sls_realization.utils.errors import WindowError
from sls_realization.utils.linalg import RANK_TOL, pinv

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class LtvAnchor:
    """
    Realization at one anchor k together with the factors it was computed from.
    """

    k: int
    quad: Quadruple
    ## Ô(k) and R̂(k-1) from H(k)
    obs: np.ndarray
    ctrl_prev: np.ndarray
    ## Ô(k+1) and R̂(k) from H(k+1)
    obs_next: np.ndarray
    ctrl: np.ndarray
    singular_values: np.ndarray

    def rebased(self, T: np.ndarray) -> "LtvAnchor":
        """
        Returns:
            The same anchor expressed in the state basis x̃ = T⁻¹x at every time.
        """

        T_inv = np.linalg.inv(T)
        return LtvAnchor(
            k=self.k,
            quad=self.quad.similar(T),
            obs=self.obs @ T,
            ctrl_prev=T_inv @ self.ctrl_prev,
            obs_next=self.obs_next @ T,
            ctrl=T_inv @ self.ctrl,
            singular_values=self.singular_values,
        )


@dataclass(frozen=True, eq=False)
class LtvRealization:
    order: int
    window: Tuple[int, int]
    anchors: Dict[int, LtvAnchor]

    @property
    def computed_at(self) -> Tuple[int, ...]:
        return tuple(sorted(self.anchors))

    @property
    def quads(self) -> Dict[int, Quadruple]:
        return {k: self.anchors[k].quad for k in self.computed_at}

    def anchor(self, k: int) -> LtvAnchor:
        try:
            return self.anchors[k]
        except KeyError:
            raise WindowError(f"No realization computed at anchor k={k}") from None

    def quad(self, k: int) -> Quadruple:
        return self.anchor(k).quad

    def rebased(self, T: np.ndarray) -> "LtvRealization":
        return LtvRealization(
            order=self.order,
            window=self.window,
            anchors={k: anchor.rebased(T) for k, anchor in self.anchors.items()},
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n": self.order,
            "window": list(self.window),
            "anchors": list(self.computed_at),
            "quads": {str(k): self.anchors[k].quad.to_dict() for k in self.computed_at},
        }


def realize_anchor(markov: MarkovSequence, k: int, rank_tol: float = RANK_TOL) -> LtvAnchor:
    n, p, m = markov.order, markov.p, markov.m
    lo, hi = markov.window
    if not lo <= k <= hi:
        raise WindowError(f"Anchor k={k} outside the realization window [{lo}, {hi}]")

    current = factorize(build(markov, 2 * n + 1, 2 * n, k), n, rank_tol)
    following = factorize(build(markov, 2 * n + 1, 2 * n, k + 1), n, rank_tol)

    a = pinv(following.obs[:-p]) @ current.obs[p:]
    quad = Quadruple(
        A=a,
        B=following.ctrl[:, :m],
        C=current.obs[:p],
        D=markov.block(k, k),
    )
    return LtvAnchor(
        k=k,
        quad=quad,
        obs=current.obs,
        ctrl_prev=current.ctrl,
        obs_next=following.obs,
        ctrl=following.ctrl,
        singular_values=current.singular_values,
    )


def realize_at(markov: MarkovSequence, k: int, rank_tol: float = RANK_TOL) -> Quadruple:
    """
    Args:
        markov: Markov parameters with lags up to 4n.
        k: Anchor in [2n+1, N-4n].
        rank_tol: Relative threshold on σ_n of both Hankel matrices.

    Returns:
        The quadruple P̂(k).
    """

    return realize_anchor(markov, k, rank_tol).quad


def realize_range(
    markov: MarkovSequence,
    anchors: Optional[Iterable[int]] = None,
    rank_tol: float = RANK_TOL,
    workers: int = 1,
) -> LtvRealization:
    """
    Realize every anchor of κ independently.

    Args:
        markov: Markov parameters.
        anchors: The set κ, the whole window [k', k''] by default.
        rank_tol: Relative rank threshold.
        workers: Number of worker threads; results are merged by anchor order.

    Returns:
        The realization at exactly the anchors of κ.
    """

    lo, hi = markov.window
    anchors = sorted(set(range(lo, hi + 1) if anchors is None else (int(k) for k in anchors)))
    outside = [k for k in anchors if not lo <= k <= hi]
    if outside:
        raise WindowError(f"Anchors {outside[:5]} outside the realization window [{lo}, {hi}]")

    def task(k: int) -> LtvAnchor:
        return realize_anchor(markov, k, rank_tol)

    if workers > 1 and len(anchors) > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            results = list(executor.map(task, anchors))
    else:
        results = [task(k) for k in anchors]

    logger.info("Realized %d anchors on [%d, %d]", len(results), lo, hi)
    return LtvRealization(
        order=markov.order,
        window=(lo, hi),
        anchors={anchor.k: anchor for anchor in results},
    )


def reconstruct_markov(real: LtvRealization, k: int, l: int) -> np.ndarray:
    """
    Returns:
        Ĉ(k)Â(k-1)···Â(l+1)B̂(l), or D̂(k) for k = l.
    """

    if l > k:
        raise WindowError(f"Reconstruction needs l ≤ k, got k={k}, l={l}")
    missing = [j for j in range(l, k + 1) if j not in real.anchors]
    if missing:
        raise WindowError(f"Missing realizations at anchors {missing[:5]} in the span [{l}, {k}]")
    if k == l:
        return np.array(real.quad(k).D)
    v = real.quad(l).B
    for j in range(l + 1, k):
        v = real.quad(j).A @ v
    return real.quad(k).C @ v
