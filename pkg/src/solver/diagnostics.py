import logging
import math
from typing import List, Optional, Sequence

import numpy as np

from src.solver.errors import InvalidArgumentError
from src.solver.loss import loss_gradient
from src.solver.models import (
    CertificateReport, EpsDynamicsReport, IterationRecord, ProblemInstance, SolverConfig, ThinSvd,
)
from src.solver.svd import rank_of

logger = logging.getLogger(__name__)

PIXEL_PEAK = 255.0


def rel_err(x: np.ndarray, x_star: np.ndarray) -> float:
    """||X - X*||_F / ||X*||_F"""
    if x.shape != x_star.shape:
        raise InvalidArgumentError(f"shape mismatch {x.shape} vs {x_star.shape}")
    denom = float(np.linalg.norm(x_star))
    if denom == 0:
        raise InvalidArgumentError("relative error undefined for a zero ground truth")
    return float(np.linalg.norm(x - x_star)) / denom


def rel_dist(instance: ProblemInstance, x: np.ndarray, svd_x: ThinSvd, lam: float, p: float) -> float:
    """
    ||U_r^T grad f(X) V_r + lambda p Sigma_r^(p-1)||_F / ||M||_F over the r
    positive singular values. A zero X is a critical point, so r = 0 gives 0.
    """
    r = rank_of(svd_x.s)
    if r == 0:
        return 0.0
    g = loss_gradient(instance, x)
    u_r = svd_x.u[:, :r]
    v_r = svd_x.v[:, :r]
    d = u_r.T @ g @ v_r
    d[np.diag_indices(r)] += lam * p * svd_x.s[:r] ** (p - 1)
    dist = float(np.linalg.norm(d))
    m_norm = float(np.linalg.norm(instance.observed))
    if m_norm == 0:
        logger.warning("||M||_F = 0, reporting the unnormalized distance")
        return dist
    return dist / m_norm


def optimality_error(
        x_new: np.ndarray,
        x_cur: np.ndarray,
        x_prev: np.ndarray,
        svd_new: ThinSvd,
        weights_prev: np.ndarray,
        instance: ProblemInstance,
        config: SolverConfig,
        alpha: Optional[float] = None,
) -> float:
    """
    ||E^{k+1}||_F for E^{k+1} = grad f(X^{k+1}) + lambda U diag(w_bar o xi) V^T.

    Evaluated through the subproblem's stationarity condition:
        E = [grad f(X^{k+1}) - grad f(Y^k)] - beta [(X^{k+1} - Y^k) + (X^{k+1} - X^k)]
            + lambda U diag((w_bar - w^k) o xi) V^T
    where w_bar = p sigma^(p-1) on the support and w^k on the zero set, so
    the last term only lives on the support (xi = 1 there).
    """
    alpha = config.effective_alpha if alpha is None else alpha
    beta = config.beta
    y = x_cur + alpha * (x_cur - x_prev)
    e = loss_gradient(instance, x_new) - loss_gradient(instance, y)
    e -= beta * ((x_new - y) + (x_new - x_cur))
    r = rank_of(svd_new.s)
    if r > 0:
        w_bar = instance.p * svd_new.s[:r] ** (instance.p - 1)
        coef = instance.lam * (w_bar - weights_prev[:r])
        e += (svd_new.u[:, :r] * coef) @ svd_new.v[:, :r].T
    return float(np.linalg.norm(e))


def psnr(restored: np.ndarray, reference: np.ndarray) -> float:
    """10 log10(255^2 / MSE) over all channels; identical images give +inf."""
    restored = np.asarray(restored, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    if restored.shape != reference.shape:
        raise InvalidArgumentError(f"image shapes differ: {restored.shape} vs {reference.shape}")
    mse = float(np.mean((reference - restored) ** 2))
    if mse == 0:
        logger.warning("PSNR of identical images, returning +inf")
        return math.inf
    return 10.0 * math.log10(PIXEL_PEAK ** 2 / mse)


def identification_index(ranks: Sequence[int]) -> int:
    """Smallest position K with ranks[K:] constant."""
    if len(ranks) == 0:
        return 0
    last = ranks[-1]
    k = len(ranks) - 1
    while k > 0 and ranks[k - 1] == last:
        k -= 1
    return k


def eps_dynamics_report(records: List[IterationRecord], mu: float) -> EpsDynamicsReport:
    """
    After the rank settles, eps on the support must shrink by exactly mu per
    iteration and eps on the zero set must stop moving. Needs records kept
    with `keep_eps_history` and no thinning.
    """
    if not records or any(rec.eps is None for rec in records):
        raise InvalidArgumentError("eps dynamics need records with the eps history")
    ranks = [rec.rank for rec in records]
    start = identification_index(ranks)
    r = ranks[-1]
    eps = np.array([rec.eps for rec in records])

    support_exact = True
    for j in range(start, len(records) - 1):
        if not np.array_equal(eps[j + 1, :r], mu * eps[j, :r]):
            support_exact = False
            break

    frozen_from = len(records) - 1
    tail = eps[:, r:]
    while frozen_from > start and np.array_equal(tail[frozen_from - 1], tail[-1]):
        frozen_from -= 1

    return EpsDynamicsReport(
        identified_at=records[start].k,
        final_rank=r,
        support_decay_exact=support_exact,
        zeroset_frozen_from=records[frozen_from].k,
    )


def fit_geometric_rate(values: Sequence[float], tail: Optional[int] = None) -> Optional[float]:
    """
    Least-squares fit of log(values) against the index over the last `tail`
    positive entries; returns the per-step ratio, or None without enough data.
    """
    v = np.asarray(values, dtype=np.float64)
    if tail is not None:
        v = v[-tail:]
    idx = np.flatnonzero(v > 0)
    if idx.size < 3:
        return None
    slope, _ = np.polyfit(idx.astype(np.float64), np.log(v[idx]), 1)
    return float(np.exp(slope))


def certificate_report(records: List[IterationRecord], kkt_tol: float, m_norm: float) -> CertificateReport:
    if not records:
        return CertificateReport(
            iterations=0, h_violations=0, min_h_margin=0.0, surrogate_violations=0,
            weights_ordered=True, max_kkt_residual=0.0, kkt_ok=True,
            final_optimality_error=0.0, optimality_ok=True, passed=True,
        )
    h_violations = sum(1 for rec in records if rec.h_decrease_margin < 0)
    surrogate_violations = sum(1 for rec in records if rec.surrogate_decrease < 0)
    weights_ordered = all(rec.weights_ordered for rec in records)
    max_kkt = max(rec.kkt_residual for rec in records)
    final_e = records[-1].optimality_error
    kkt_ok = max_kkt <= kkt_tol
    optimality_ok = final_e <= 1e-4 * max(m_norm, 1e-300)
    return CertificateReport(
        iterations=len(records),
        h_violations=h_violations,
        min_h_margin=min(rec.h_decrease_margin for rec in records),
        surrogate_violations=surrogate_violations,
        weights_ordered=weights_ordered,
        max_kkt_residual=max_kkt,
        kkt_ok=kkt_ok,
        final_optimality_error=final_e,
        optimality_ok=optimality_ok,
        passed=(h_violations == 0 and surrogate_violations == 0 and weights_ordered and kkt_ok),
    )
