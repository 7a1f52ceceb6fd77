import logging
from typing import Optional

import numpy as np
import scipy.linalg

from src.solver.errors import NumericalError, InvalidArgumentError
from src.solver.models import ThinSvd

logger = logging.getLogger(__name__)

RELATIVE_RANK_CUTOFF = 1e-12


def svd_ordered(a: np.ndarray) -> ThinSvd:
    """
    Thin SVD with exactly min(m, n) singular values in non-increasing order.

    gesdd is tried first; gesvd is slower but converges on the rare inputs
    where the divide-and-conquer driver does not.
    """
    if a.ndim != 2:
        raise InvalidArgumentError(f"svd_ordered expects a matrix, got shape {a.shape}")
    try:
        u, s, vt = scipy.linalg.svd(a, full_matrices=False, lapack_driver="gesdd", check_finite=False)
    except np.linalg.LinAlgError:
        logger.warning(f"gesdd did not converge on a {a.shape[0]}x{a.shape[1]} matrix, retrying with gesvd")
        try:
            u, s, vt = scipy.linalg.svd(a, full_matrices=False, lapack_driver="gesvd", check_finite=False)
        except np.linalg.LinAlgError as e:
            raise NumericalError(
                f"SVD failed for {a.shape[0]}x{a.shape[1]} matrix: "
                f"||A||_F={np.linalg.norm(a):.6g}, finite={bool(np.all(np.isfinite(a)))}"
            ) from e
    if s.size > 1 and np.any(np.diff(s) > 0):
        raise NumericalError("SVD backend returned singular values out of order")
    return ThinSvd(u=u, s=s, v=vt.T)


def rank_of(s: np.ndarray, relative: bool = False, rtol: float = RELATIVE_RANK_CUTOFF) -> int:
    """
    Exact mode counts s_i > 0, which is what thresholded iterates need.
    Relative mode counts s_i > rtol * s_0 for raw SVD outputs.
    """
    s = np.asarray(s)
    if s.size == 0:
        return 0
    if relative:
        if s[0] <= 0:
            return 0
        return int(np.count_nonzero(s > rtol * s[0]))
    return int(np.count_nonzero(s > 0))


def reconstruct(svd: ThinSvd, s: Optional[np.ndarray] = None) -> np.ndarray:
    """U diag(s) V^T, with the factors of `svd` and its own or a replacement spectrum."""
    s = svd.s if s is None else s
    return (svd.u * s) @ svd.v.T
