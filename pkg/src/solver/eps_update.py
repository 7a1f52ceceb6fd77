"""
Adaptive perturbation update.

Supports are leading blocks of the sorted spectrum, so every index set is
described by its size: I(X^k) = [0, r_old), I(X^{k+1}) = [0, r_new).
Positions written 1-based in the comments below map to index - 1 here.

The update keeps sigma_new + eps_new non-increasing, which makes the next
weights ascending, shrinks eps by mu on the new support and never increases
any entry.
"""
import logging

import numpy as np

from src.solver.errors import InvariantViolationError
from src.solver.models import EpsUpdateInput

logger = logging.getLogger(__name__)


def _check_prefix(sigma: np.ndarray, r: int):
    if r > sigma.size:
        raise InvariantViolationError(f"support size {r} exceeds spectrum length {sigma.size}")
    if np.any(sigma[:r] <= 0) or np.any(sigma[r:] != 0):
        raise InvariantViolationError(f"sigma is not positive exactly on its first {r} entries")


def _trim_tail(new: np.ndarray, old: np.ndarray, sigma: np.ndarray, start: int, stop: int, mu: float):
    """
    The tau1 / tau2 rule on new[start:stop]: keep old values when the last
    support entry already dominates the first trailing eps, otherwise cap
    them at mu * tau1.
    """
    if start >= stop:
        return
    tau1 = sigma[start - 1] + new[start - 1]
    tau2 = old[start]
    if tau1 >= tau2:
        new[start:stop] = old[start:stop]
    else:
        new[start:stop] = np.minimum(old[start:stop], mu * tau1)


def update_eps(inp: EpsUpdateInput) -> np.ndarray:
    sigma = np.asarray(inp.sigma_new, dtype=np.float64)
    old = np.asarray(inp.eps_old, dtype=np.float64)
    mu = inp.mu
    r_new, r_old = inp.rank_new, inp.rank_old
    m = old.size
    if sigma.size != m:
        raise InvariantViolationError(f"sigma has {sigma.size} entries, eps has {m}")
    if r_old > m:
        raise InvariantViolationError(f"old support size {r_old} exceeds {m}")
    _check_prefix(sigma, r_new)

    new = old.copy()

    if r_new == 0:
        # X^{k+1} = 0: nothing to shrink against, keep eps as is
        logger.warning(f"empty support after thresholding (previous rank {r_old}); eps left unchanged")
        return new

    if r_new == r_old:
        new[:r_new] = mu * old[:r_new]
        _trim_tail(new, old, sigma, r_new, m, mu)

    elif r_new < r_old:
        new[:r_new] = mu * old[:r_new]
        # I(X^k) \ I(X^{k+1})
        _trim_tail(new, old, sigma, r_new, r_old, mu)
        # Z(X^k), trimmed by the just-updated eps at position |I(X^k)|
        tau3 = new[r_old - 1]
        new[r_old:] = np.minimum(old[r_old:], tau3)

    else:
        new[:r_old] = mu * old[:r_old]
        # I(X^{k+1}) \ I(X^k)
        tau3 = old[r_old - 1] if r_old > 0 else np.inf
        new[r_old:r_new] = mu * np.minimum(old[r_old:r_new], tau3)
        _trim_tail(new, old, sigma, r_new, m, mu)

    if np.any(new <= 0):
        raise InvariantViolationError("eps update produced a nonpositive entry")
    return new


def perturbed_order_ok(sigma: np.ndarray, eps: np.ndarray, rank: int) -> bool:
    """sigma + eps non-increasing overall, eps non-increasing on the support."""
    t = np.asarray(sigma) + np.asarray(eps)
    if np.any(np.diff(t) > 0):
        return False
    return bool(np.all(np.diff(np.asarray(eps)[:rank]) <= 0))
