"""
Closed-form solution of the weighted nuclear norm proximal step

    min_X  1/2 ||X - S||_F^2 + t * sum_i w_i sigma_i(X)

for ascending weights w. The minimizer thresholds the singular values of S
one by one, [Sigma_i - t w_i]_+, and keeps the singular vectors of S, so the
output and S share an ordered SVD.
"""
import logging
from typing import NamedTuple, Optional

import numpy as np
import scipy.linalg

from src.solver.errors import InvariantViolationError
from src.solver.models import SubproblemInput, ThinSvd
from src.solver.regularizer import weights_ascending
from src.solver.svd import reconstruct, svd_ordered

logger = logging.getLogger(__name__)

KKT_TOLERANCE = 1e-8


class SubproblemSolution(NamedTuple):
    x: np.ndarray
    svd: ThinSvd
    # singular values of the step matrix, paired with svd.u / svd.v
    step_sigma: np.ndarray


def solve_weighted_svt(inp: SubproblemInput) -> SubproblemSolution:
    w = np.asarray(inp.weights, dtype=np.float64)
    if np.any(w <= 0):
        raise InvariantViolationError("subproblem weights must be positive")
    if not weights_ascending(w):
        raise InvariantViolationError(
            "subproblem weights are not ascending; the thresholding formula is not a global minimizer")
    if not np.all(np.isfinite(inp.step_matrix)):
        raise InvariantViolationError("step matrix contains NaN or Inf")

    step = svd_ordered(inp.step_matrix)
    if w.shape != step.s.shape:
        raise InvariantViolationError(f"expected {step.s.size} weights, got {w.size}")
    s_plus = np.maximum(step.s - inp.threshold_scale * w, 0.0)
    out = ThinSvd(u=step.u, s=s_plus, v=step.v)
    return SubproblemSolution(x=reconstruct(out), svd=out, step_sigma=step.s)


def subproblem_kkt_residual(
        x_plus: np.ndarray,
        inp: SubproblemInput,
        beta: float,
        lam: float,
        solution: Optional[SubproblemSolution] = None,
) -> float:
    """
    ||2 beta (X+ - S) + lambda U diag(w o xi) V^T||_F, with xi_i = 1 on the
    support of X+ and xi_i = 2 beta Sigma_i / (lambda w_i) clamped to [0, 1]
    on its zero set.
    """
    if solution is None:
        step = svd_ordered(inp.step_matrix)
        u, v, big_sigma = step.u, step.v, step.s
        s_plus = np.maximum(big_sigma - inp.threshold_scale * inp.weights, 0.0)
    else:
        u, v, big_sigma = solution.svd.u, solution.svd.v, solution.step_sigma
        s_plus = solution.svd.s

    lam_w = lam * np.asarray(inp.weights, dtype=np.float64)
    lam_w_xi = np.where(s_plus > 0, lam_w, np.clip(2.0 * beta * big_sigma, 0.0, lam_w))
    residual = 2.0 * beta * (x_plus - inp.step_matrix) + (u * lam_w_xi) @ v.T
    return float(np.linalg.norm(residual))


def kkt_tolerance(inp: SubproblemInput) -> float:
    return KKT_TOLERANCE * max(1.0, float(np.linalg.norm(inp.step_matrix)))


def surrogate_objective(x: np.ndarray, inp: SubproblemInput, sigma: Optional[np.ndarray] = None) -> float:
    """1/2 ||X - S||_F^2 + t sum_i w_i sigma_i(X), sigma sorted non-increasing."""
    if sigma is None:
        sigma = scipy.linalg.svdvals(x)
    d = x - inp.step_matrix
    return 0.5 * float(np.vdot(d, d)) + inp.threshold_scale * float(np.dot(inp.weights, sigma))
