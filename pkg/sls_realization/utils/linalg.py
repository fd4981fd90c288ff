from typing import Tuple

import numpy as np
import scipy.linalg

## Relative cutoff for every pseudo-inverse in the package
PINV_RTOL: float = 1e-10
## Numerical rank threshold, relative to the largest singular value
RANK_TOL: float = 1e-8


def pinv(x: np.ndarray, rtol: float = PINV_RTOL) -> np.ndarray:
    return scipy.linalg.pinv(x, atol=0.0, rtol=rtol)


def numerical_rank(x: np.ndarray, tol: float = RANK_TOL) -> int:
    s = scipy.linalg.svd(x, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > tol * s[0]))


def spectral_radius(x: np.ndarray) -> float:
    return float(np.max(np.abs(scipy.linalg.eigvals(x))))


def signed_svd(x: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Thin SVD with a fixed sign convention: the first nonzero entry of every left singular vector is
    made nonnegative and the matching right singular vector is flipped with it.

    Args:
        x: Matrix to decompose.

    Returns:
        (U, s, Vt) such that x = U @ diag(s) @ Vt.
    """

    u, s, vt = scipy.linalg.svd(x, full_matrices=False, lapack_driver="gesvd")
    scale = np.max(np.abs(u), axis=0)
    for j in range(u.shape[1]):
        nonzero = np.flatnonzero(np.abs(u[:, j]) > 1e-12 * max(scale[j], 1e-300))
        if nonzero.size and u[nonzero[0], j] < 0.0:
            u[:, j] = -u[:, j]
            vt[j, :] = -vt[j, :]
    return u, s, vt


def feature_M(x: np.ndarray) -> float:
    """
    Args:
        x: Square matrix.

    Returns:
        M(x) = Σ|λ_i(x)| over the complex spectrum; invariant under similarity.
    """

    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[0] != x.shape[1]:
        raise ValueError(f"Feature M needs a square matrix, got shape {x.shape}")
    return float(np.sum(np.abs(scipy.linalg.eigvals(x))))
