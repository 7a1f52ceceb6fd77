"""
Extrapolated iteratively reweighted nuclear norm solver with rank
identification, plus its two baselines (IRNRI without extrapolation and
PIRNN with a fixed perturbation).

Each iteration:
    w^k     = p (sigma(X^k) + eps^k)^(p-1)                      ascending
    Y^k     = X^k + alpha (X^k - X^{k-1})
    X^{k+1} = SVT of (X^k + Y^k)/2 - grad f(Y^k)/(2 beta) at lambda w^k/(2 beta)
    eps^{k+1} from the adaptive update (or fixed for PIRNN)
"""
import logging
import math
from typing import List, Optional

import numpy as np

from src.solver.datagen import gen_lowrank, make_rng
from src.solver.diagnostics import optimality_error, rel_dist, rel_err
from src.solver.eps_update import update_eps
from src.solver.errors import CertifiedFailureError, ConfigurationError, InvalidArgumentError, NumericalError
from src.solver.loss import MatrixCompletionLoss, SmoothLoss
from src.solver.models import (
    EpsUpdateInput, InitKind, IterateState, IterationRecord, PerturbationState, ProblemInstance,
    SolveOutcome, SolverConfig, StopReason, SubproblemInput, Variant,
)
from src.solver.regularizer import compute_weights, merit_H, schatten_penalty, weights_ascending
from src.solver.subproblem import solve_weighted_svt, subproblem_kkt_residual, surrogate_objective
from src.solver.svd import rank_of, svd_ordered

logger = logging.getLogger(__name__)

CERTIFICATE_SLACK = 1e-9


def nonconvex_alpha_cap(beta: float, lipschitz: float) -> float:
    return math.sqrt(beta / (beta + 3.0 * lipschitz))


def validate_alpha(alpha: float, beta: float, lipschitz: float, convex_loss: bool) -> float:
    """
    Returns the extrapolation cap: 1 for a convex L_f-smooth loss,
    sqrt(beta / (beta + 3 L_f)) otherwise. alpha = 0 is always accepted.
    """
    if not beta > lipschitz:
        raise ConfigurationError(f"beta={beta} must exceed the Lipschitz constant {lipschitz}")
    if alpha < 0:
        raise ConfigurationError(f"alpha must be nonnegative, got {alpha}")
    if convex_loss:
        cap, branch = 1.0, "convex loss"
    else:
        cap, branch = nonconvex_alpha_cap(beta, lipschitz), "nonconvex loss"
    if alpha > 0 and alpha >= cap:
        raise ConfigurationError(f"alpha={alpha} is not below the {branch} cap {cap:.6g}")
    return cap


def bind_config(config: SolverConfig, instance: ProblemInstance, loss: Optional[SmoothLoss] = None) -> SolverConfig:
    """Check the config against the instance and fill in alpha_cap."""
    loss = loss or MatrixCompletionLoss(instance)
    convex = config.convex_loss and loss.convex
    cap = validate_alpha(config.effective_alpha, config.beta, instance.lipschitz, convex)
    if config.init == InitKind.LOWRANK and config.init_rank > instance.m:
        raise ConfigurationError(f"init_rank={config.init_rank} exceeds min(m, n)={instance.m}")
    return config.model_copy(update={"alpha_cap": cap, "convex_loss": convex})


def decrease_constant(config: SolverConfig, lipschitz: float) -> float:
    """
    C in H^k - H^{k+1} >= C ||X^k - X^{k-1}||_F^2. Only the nonconvex cap
    gives a positive constant; above it the check is plain non-increase.
    """
    alpha = config.effective_alpha
    beta = config.beta
    if alpha < nonconvex_alpha_cap(beta, lipschitz):
        return 0.5 * beta * (1.0 - alpha ** 2 * (3.0 * lipschitz + beta) / beta)
    return 0.0


def initial_point(instance: ProblemInstance, config: SolverConfig) -> np.ndarray:
    m, n = instance.m, instance.n
    if config.init == InitKind.ZEROS:
        return np.zeros((m, n))
    rng = make_rng(config.rng_seed)
    if config.init == InitKind.LOWRANK:
        return gen_lowrank(m, n, config.init_rank, rng)
    return rng.standard_normal((m, n))


def _max_or_none(v: np.ndarray) -> Optional[float]:
    return float(v.max()) if v.size else None


def _stop_reason(config: SolverConfig, k_next: int, relerr: Optional[float], reldist: float,
                 step_inf: float) -> Optional[StopReason]:
    if config.stop_on_rel_err and relerr is not None and relerr <= config.opttol:
        return StopReason.OPTTOL_RELERR
    if reldist <= config.opttol:
        return StopReason.OPTTOL_RELDIST
    if step_inf <= config.klopt:
        return StopReason.KLOPT_STEP
    if k_next >= config.itmax:
        return StopReason.ITMAX
    return None


def solve(instance: ProblemInstance, config: SolverConfig, x0: Optional[np.ndarray] = None) -> SolveOutcome:
    loss = MatrixCompletionLoss(instance)
    config = bind_config(config, instance, loss)
    m = instance.m
    lam, p = instance.lam, instance.p
    beta = config.beta
    alpha = config.effective_alpha
    threshold_scale = lam / (2.0 * beta)
    check = config.check_certificates

    if x0 is None:
        x0 = initial_point(instance, config)
    else:
        x0 = np.array(x0, dtype=np.float64)
        if instance.transposed:
            x0 = x0.T
        if x0.shape != instance.observed.shape:
            raise InvalidArgumentError(f"x0 must be {instance.m}x{instance.n}, got {x0.shape}")
    if not np.all(np.isfinite(x0)):
        raise NumericalError("x0 contains NaN or Inf")

    fixed_eps = config.variant == Variant.PIRNN
    eps0 = np.full(m, config.eps_fixed if fixed_eps else config.eps0)
    svd0 = svd_ordered(x0)
    state = IterateState(
        x_cur=x0,
        x_prev=x0,
        svd=svd0,
        perturbation=PerturbationState(eps=eps0, frozen=np.zeros(m, dtype=bool)),
        rank=rank_of(svd0.s),
        k=0,
    )

    h_cur = merit_H(instance, x0, x0, svd0.s, eps0, beta)
    slack = CERTIFICATE_SLACK * max(1.0, abs(h_cur))
    c_decrease = decrease_constant(config, instance.lipschitz)

    x_star = instance.x_star
    has_truth = x_star is not None and float(np.linalg.norm(x_star)) > 0
    x0_dist2 = float(np.linalg.norm(x0 - x_star) ** 2) if has_truth else 0.0

    logger.info(
        f"{config.variant.value} start: {instance.m}x{instance.n}, |Omega|={len(instance.mask)}, "
        f"lambda={lam:.4g}, p={p}, beta={beta}, alpha={alpha}, mu={config.mu}, itmax={config.itmax}")

    trace: List[IterationRecord] = []
    stop: Optional[StopReason] = None
    for k in range(config.itmax):
        weights = compute_weights(state.sigma, state.eps, p)
        ordered = weights_ascending(weights)
        if check and not ordered:
            raise CertifiedFailureError("weight_order", k, "weights are not ascending", trace)

        y = state.x_cur + alpha * (state.x_cur - state.x_prev)
        step = 0.5 * (state.x_cur + y) - loss.gradient(y) / (2.0 * beta)
        inp = SubproblemInput(step_matrix=step, weights=weights, threshold_scale=threshold_scale)
        sol = solve_weighted_svt(inp)
        x_new = sol.x
        if not np.all(np.isfinite(x_new)):
            raise NumericalError(f"iterate {k + 1} contains NaN or Inf")
        sigma_new = sol.svd.s
        rank_new = rank_of(sigma_new)

        sur_cur = surrogate_objective(state.x_cur, inp, state.sigma)
        sur_new = surrogate_objective(x_new, inp, sigma_new)
        sur_margin = sur_cur - sur_new + CERTIFICATE_SLACK * max(1.0, abs(sur_cur))

        if fixed_eps:
            eps_new = state.eps
        else:
            eps_new = update_eps(EpsUpdateInput(
                sigma_new=sigma_new, rank_new=rank_new, rank_old=state.rank, eps_old=state.eps, mu=config.mu))

        h_new = merit_H(instance, x_new, state.x_cur, sigma_new, eps_new, beta)
        d_prev = state.x_cur - state.x_prev
        h_margin = (h_cur - h_new) - c_decrease * float(np.vdot(d_prev, d_prev)) + slack

        diff = x_new - state.x_cur
        step_fro = float(np.linalg.norm(diff))
        step_inf = float(np.max(np.abs(diff)))
        reldist = rel_dist(instance, x_new, sol.svd, lam, p)
        relerr = rel_err(x_new, x_star) if has_truth else None
        f_val = loss.value(x_new)
        penalty = schatten_penalty(sigma_new, lam, p)

        stop = _stop_reason(config, k + 1, relerr, reldist, step_inf)
        record = IterationRecord(
            k=k + 1,
            f_val=f_val,
            penalty_val=penalty,
            objective=f_val + penalty,
            merit_h=h_new,
            rel_err=relerr,
            rel_dist=reldist,
            rank=rank_new,
            step_fro=step_fro,
            step_inf=step_inf,
            eps_max_support=_max_or_none(eps_new[:rank_new]),
            eps_max_zeroset=_max_or_none(eps_new[rank_new:]),
            alpha_used=alpha,
            kkt_residual=subproblem_kkt_residual(x_new, inp, beta, lam, sol),
            optimality_error=optimality_error(
                x_new, state.x_cur, state.x_prev, sol.svd, weights, instance, config, alpha),
            h_decrease_margin=h_margin,
            surrogate_decrease=sur_margin,
            weights_ordered=ordered,
            degenerate_rank=rank_new == 0,
            rel_residual=(float(np.linalg.norm(x_new - x_star) ** 2) / x0_dist2
                          if has_truth and x0_dist2 > 0 else None),
            eps=eps_new.tolist() if config.keep_eps_history else None,
        )
        if (k + 1) % config.trace_every == 0 or stop is not None:
            trace.append(record)
        logger.debug(
            f"k={k + 1} F={record.objective:.10g} H={h_new:.10g} rank={rank_new} "
            f"reldist={reldist:.3e} step_inf={step_inf:.3e}")

        if check and h_margin < 0:
            raise CertifiedFailureError(
                "h_decrease", k + 1, f"H went from {h_cur:.12g} to {h_new:.12g} (margin {h_margin:.3g})", trace)
        if check and sur_margin < 0:
            raise CertifiedFailureError(
                "surrogate_decrease", k + 1, f"surrogate rose by {-sur_margin:.3g}", trace)

        state = IterateState(
            x_cur=x_new,
            x_prev=state.x_cur,
            y=y,
            svd=sol.svd,
            perturbation=PerturbationState(eps=eps_new, frozen=eps_new == state.eps),
            weights=weights,
            rank=rank_new,
            k=k + 1,
        )
        h_cur = h_new
        if stop is not None:
            break

    logger.info(
        f"{config.variant.value} stop: {stop.value} after {state.k} iterations, rank {state.rank}, "
        f"reldist {trace[-1].rel_dist:.3e}")
    return SolveOutcome(
        x_final=instance.to_original(state.x_cur),
        rank_final=state.rank,
        iterations=state.k,
        stop_reason=stop,
        trace=trace,
        sigma_final=state.sigma,
        eps_final=state.eps,
        config=config,
    )
