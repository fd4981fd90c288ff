"""
Common state basis for the recovered submodels.

Each representative P̂_j is only known up to its own similarity T_j. Markov parameters that span a
switch k_i from state j1 to j2,

    h(k_i+ξ, k_i-η) = Ĉ_{j2} Â_{j2}^ξ G Â_{j1}^(η-1) B̂_{j1},   1 ≤ ξ, η ≤ n,

fix the change of basis G between the two. The transforms are composed over a breadth-first
spanning tree of the switch graph rooted at label 1 and applied as Ǎ_j = Π_j⁻¹Â_jΠ_j.
"""

import logging
from collections import deque
from dataclasses import dataclass
from typing import Any, Dict, List, NamedTuple, Tuple

import numpy as np

from sls_realization.realization.cluster import ClusterResult
from sls_realization.realization.switch import SwitchEstimate
from sls_realization.system.assumptions import controllability_matrix, observability_matrix
from sls_realization.system.sls_model import (
    DiscreteState,
    MarkovSequence,
    SlsModel,
    SwitchingSequence,
    simulate,
)
from sls_realization.utils.config import COND_LIMIT
from sls_realization.utils.errors import (
    ConditioningError,
    ConnectivityError,
    RankDeficiencyError,
)
from sls_realization.utils.linalg import numerical_rank, pinv

logger = logging.getLogger(__name__)


class SwitchEdge(NamedTuple):
    k: int
    pre: int
    post: int


@dataclass(frozen=True, eq=False)
class BasisTransforms:
    ## Π_j, with Π_1 = I
    pi: Dict[int, np.ndarray]
    ## Switch instants crossed from label 1 to each label
    path: Dict[int, Tuple[int, ...]]

    def condition(self, label: int) -> float:
        return float(np.linalg.cond(self.pi[label]))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "pi": {str(label): matrix.tolist() for label, matrix in self.pi.items()},
            "path": {str(label): list(path) for label, path in self.path.items()},
            "condition": {str(label): self.condition(label) for label in self.pi},
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "BasisTransforms":
        return cls(
            pi={int(label): np.asarray(matrix, dtype=float) for label, matrix in data["pi"].items()},
            path={int(label): tuple(path) for label, path in data["path"].items()},
        )


def cross_product_at_switch(
    markov: MarkovSequence, cluster: ClusterResult, k: int, j_pre: int, j_post: int
) -> np.ndarray:
    """
    Args:
        markov: Markov parameters.
        cluster: Clustered submodels.
        k: Switch instant, φ(k-1) = j_pre and φ(k) = j_post.
        j_pre: Label before the switch.
        j_post: Label after the switch.

    Returns:
        Y = [X_1 ... X_n]·C_n(j_pre)†, X_η = O_n(j_post)†·[h(k+1, k-η); ...; h(k+n, k-η)], which
        equals Â_{j_post}·G.
    """

    representatives = cluster.representatives
    before, after = representatives[j_pre], representatives[j_post]
    n = before.n
    obs = observability_matrix(after, n)
    ctrl = controllability_matrix(before, n)
    if numerical_rank(obs) < n:
        raise RankDeficiencyError(f"Observability matrix of state {j_post} has rank below n={n}")
    if numerical_rank(ctrl) < n:
        raise RankDeficiencyError(f"Controllability matrix of state {j_pre} has rank below n={n}")

    obs_pinv = pinv(obs)
    columns = []
    for eta in range(1, n + 1):
        z = np.vstack([markov.block(k + xi, k - eta) for xi in range(1, n + 1)])
        columns.append(obs_pinv @ z)
    return np.hstack(columns) @ pinv(ctrl)


def edge_transform(
    markov: MarkovSequence,
    cluster: ClusterResult,
    edge: SwitchEdge,
    cond_limit: float = COND_LIMIT,
) -> np.ndarray:
    """
    Returns:
        G = Â_{post}⁻¹·Y, the change of basis from the pre-switch to the post-switch state.

    Raises:
        ConditioningError: If cond(Â_{post}) exceeds `cond_limit` (a pole near zero).
    """

    a_post = cluster.representatives[edge.post].A
    condition = np.linalg.cond(a_post)
    if not condition <= cond_limit:
        raise ConditioningError(
            f"State {edge.post} has cond(Â) = {condition:.3g} > {cond_limit:.3g}; "
            f"its poles must stay away from zero"
        )
    y = cross_product_at_switch(markov, cluster, edge.k, edge.pre, edge.post)
    return np.linalg.solve(a_post, y)


def switch_edges(switch_est: SwitchEstimate, n_steps: int, n: int) -> List[SwitchEdge]:
    """
    Detected switches with at least n samples of the old state before and n+1 of the new one
    after, in order of occurrence.
    """

    phi = switch_est.extended(n_steps)
    edges = []
    for k in switch_est.switches:
        if k - n < 1 or k + n > n_steps:
            continue
        before = {phi.label_at(t) for t in range(k - n, k)}
        after = {phi.label_at(t) for t in range(k, k + n + 1)}
        if len(before) != 1 or len(after) != 1:
            logger.debug("Switch at k=%d skipped: dwell below n on one side", k)
            continue
        edges.append(SwitchEdge(k, before.pop(), after.pop()))
    return edges


def solve_transforms(
    markov: MarkovSequence,
    cluster: ClusterResult,
    switch_est: SwitchEstimate,
    cond_limit: float = COND_LIMIT,
) -> BasisTransforms:
    """
    Breadth-first search from label 1 over the switch graph, edges visited in order of first
    occurrence. A switch j1 → j2 gives Π_{j2} = G·Π_{j1} and, crossed backwards,
    Π_{j1} = G⁻¹·Π_{j2}. Ill-conditioned edges are skipped in favour of later ones.

    Raises:
        ConnectivityError: If a label cannot be reached from label 1.
    """

    n = markov.order
    labels = cluster.labels
    pi = {1: np.eye(n)}
    path: Dict[int, Tuple[int, ...]] = {1: ()}
    edges = switch_edges(switch_est, markov.n_steps, n)
    transforms: Dict[int, np.ndarray] = {}
    failed = set()

    def transform(index: int) -> np.ndarray:
        if index not in transforms:
            transforms[index] = edge_transform(markov, cluster, edges[index], cond_limit)
        return transforms[index]

    queue = deque([1])
    while queue and len(pi) < len(labels):
        current = queue.popleft()
        for index, edge in enumerate(edges):
            if index in failed or current not in (edge.pre, edge.post):
                continue
            target = edge.post if edge.pre == current else edge.pre
            if target in pi:
                continue
            try:
                g = transform(index)
            except (ConditioningError, RankDeficiencyError) as e:
                logger.warning("Skipping switch at k=%d: %s", edge.k, e)
                failed.add(index)
                continue
            if edge.pre == current:
                pi[target] = g @ pi[current]
            else:
                pi[target] = np.linalg.solve(g, pi[current])
            path[target] = path[current] + (edge.k,)
            logger.debug("Π_%d from Π_%d across the switch at k=%d", target, current, edge.k)
            queue.append(target)

    missing = [label for label in labels if label not in pi]
    if missing:
        raise ConnectivityError(
            f"States {missing} cannot be reached from state 1 through the detected switches"
        )
    logger.info("Basis transforms for %d states", len(pi))
    return BasisTransforms(pi=pi, path=path)


def apply_transforms(cluster: ClusterResult, transforms: BasisTransforms) -> Tuple[DiscreteState, ...]:
    """
    Returns:
        (Π_j⁻¹Â_jΠ_j, Π_j⁻¹B̂_j, Ĉ_jΠ_j, D̂_j) for every label j.
    """

    states = []
    for label, quad in cluster.representatives.items():
        if label not in transforms.pi:
            raise ConnectivityError(f"No basis transform for state {label}")
        common = quad.similar(transforms.pi[label])
        states.append(DiscreteState(A=common.A, B=common.B, C=common.C, D=common.D, label=label))
    return tuple(states)


def predict_output(
    common: Tuple[DiscreteState, ...], phi_hat: SwitchingSequence, x0: Any, inputs: Any
) -> np.ndarray:
    """
    Simulate the common-basis submodels switched by φ̂ from time 1.

    Returns:
        (T, p) outputs for the (T, m) inputs.
    """

    return simulate(SlsModel(states=common, switching=phi_hat), x0, 1, inputs)
