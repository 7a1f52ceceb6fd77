import numpy as np

from src.solver.errors import InvariantViolationError, NumericalError
from src.solver.loss import loss_value
from src.solver.models import ProblemInstance

WEIGHT_OVERFLOW = 1e300


def schatten_penalty(sigma: np.ndarray, lam: float, p: float) -> float:
    """lambda * ||X||_p^p from the singular values."""
    return lam * float(np.sum(np.asarray(sigma, dtype=np.float64) ** p))


def smoothed_penalty(sigma: np.ndarray, eps: np.ndarray, lam: float, p: float) -> float:
    """lambda * sum (sigma_i + eps_i)^p"""
    sigma, eps = _pair(sigma, eps)
    if np.any(eps <= 0):
        raise InvariantViolationError(f"perturbation must be positive, min eps = {eps.min()}")
    return lam * float(np.sum((sigma + eps) ** p))


def compute_weights(sigma: np.ndarray, eps: np.ndarray, p: float) -> np.ndarray:
    """w_i = p (sigma_i + eps_i)^(p-1)"""
    sigma, eps = _pair(sigma, eps)
    t = sigma + eps
    if np.any(t <= 0):
        raise InvariantViolationError(f"sigma + eps must be positive, min = {t.min()}")
    powered = t ** (p - 1)
    if np.any(~np.isfinite(powered)) or np.any(powered > WEIGHT_OVERFLOW):
        raise NumericalError(
            f"weight overflow: (sigma + eps)^(p-1) reached {powered.max():.3g} at min sigma+eps = {t.min():.3g}")
    return p * powered


def weights_ascending(weights: np.ndarray) -> bool:
    return bool(np.all(np.diff(weights) >= 0))


def merit_H(
        instance: ProblemInstance,
        x: np.ndarray,
        x_prev: np.ndarray,
        sigma: np.ndarray,
        eps: np.ndarray,
        beta: float,
) -> float:
    """H(X, X_prev, eps) = f(X) + beta/2 ||X - X_prev||_F^2 + lambda sum (sigma_i + eps_i)^p"""
    if x_prev.shape != x.shape:
        raise InvariantViolationError(f"shape mismatch {x.shape} vs {x_prev.shape}")
    d = x - x_prev
    return (loss_value(instance, x)
            + 0.5 * beta * float(np.vdot(d, d))
            + smoothed_penalty(sigma, eps, instance.lam, instance.p))


def _pair(sigma, eps):
    sigma = np.asarray(sigma, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if sigma.shape != eps.shape:
        raise InvariantViolationError(f"sigma and eps differ in shape: {sigma.shape} vs {eps.shape}")
    return sigma, eps
