import logging
import math
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
from functools import partial
from pathlib import Path
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import ValidationError
from tqdm import tqdm

from src.experiments.models import (
    COMMAND_DEFAULTS, CellSummary, ChannelResult, Command, ExperimentConfig, ImageSummary, RunResult,
    SynthSummary, TraceReport,
)
from src.solver.datagen import gen_lowrank, gen_mask, observe
from src.solver.diagnostics import certificate_report, eps_dynamics_report, fit_geometric_rate, psnr
from src.solver.eirnri import solve, validate_alpha
from src.solver.errors import CertifiedFailureError, ConfigurationError, NumericalError
from src.solver.images import image_to_lowrank_target, load_image, save_image
from src.solver.models import IterationRecord, MaskKind, MaskSpec, ProblemInstance, SolveOutcome, Variant
from src.solver.snapshot import load_snapshot, save_snapshot
from src.solver.subproblem import KKT_TOLERANCE
from src.solver.svd import rank_of, svd_ordered

logger = logging.getLogger(__name__)

# "successfully recovered" bar on the final relative error, and the RelDist level
# used for iteration-count comparisons
SUCCESS_TOL = 1e-5

TRACE_COLUMNS = {
    "k": "k",
    "f": "f_val",
    "penalty": "penalty_val",
    "objective": "objective",
    "H": "merit_h",
    "rel_err": "rel_err",
    "rel_dist": "rel_dist",
    "rank": "rank",
    "step_fro": "step_fro",
    "step_inf": "step_inf",
    "eps_sup_max": "eps_max_support",
    "eps_zero_max": "eps_max_zeroset",
    "alpha": "alpha_used",
}

CERTIFICATE_COLUMNS = {
    "kkt_residual": "kkt_residual",
    "optimality_error": "optimality_error",
    "h_margin": "h_decrease_margin",
    "surrogate_margin": "surrogate_decrease",
    "weights_ordered": "weights_ordered",
    "rel_residual": "rel_residual",
}


def _merge(base: Dict[str, Any], update: Dict[str, Any]) -> Dict[str, Any]:
    res = dict(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(res.get(key), dict):
            res[key] = _merge(res[key], value)
        else:
            res[key] = value
    return res


def build_config(command: Command, file_data: Optional[Dict[str, Any]] = None,
                 overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    """Subcommand defaults < config file < command-line flags."""
    data: Dict[str, Any] = dict(command=command.value)
    for layer in (COMMAND_DEFAULTS[command], file_data or {}, overrides or {}):
        layer = dict(layer)
        # an absolute lambda in a higher layer replaces a relative one below it, and vice versa
        if layer.get("lam") is not None:
            layer.setdefault("lam_rel", None)
        if layer.get("lam_rel") is not None:
            layer.setdefault("lam", None)
        data = _merge(data, layer)
    data["command"] = command.value
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigurationError(f"invalid {command.value} configuration: {e}") from e


def derive_seeds(seed: int) -> Tuple[int, int, int]:
    """Independent seeds for X*, the mask and X0 drawn from one run seed."""
    a, b, c = np.random.SeedSequence(seed).generate_state(3)
    return int(a), int(b), int(c)


def lambda_for(cfg: ExperimentConfig, reference: np.ndarray) -> float:
    if cfg.lam is not None:
        return cfg.lam
    lam = cfg.lam_rel * float(np.max(np.abs(reference)))
    if lam <= 0:
        raise ConfigurationError("relative lambda rule gives 0 on a zero target")
    return lam


def mask_spec(cfg: ExperimentConfig, sr: float, seed: int) -> MaskSpec:
    try:
        if cfg.mask == "block":
            return MaskSpec(kind=MaskKind.BLOCK, rects=cfg.block_rects, seed=seed)
        return MaskSpec(kind=MaskKind.RANDOM_UNIFORM, sampling_ratio=sr, seed=seed)
    except ValidationError as e:
        raise ConfigurationError(f"invalid mask: {e}") from e


def synth_instance(cfg: ExperimentConfig, rank: int, sr: float, seed: int) -> Tuple[ProblemInstance, int]:
    """Gaussian rank-r X*, sampled entries and the lambda rule; also returns the X0 seed."""
    lowrank_seed, mask_seed, init_seed = derive_seeds(seed)
    x_star = gen_lowrank(cfg.m, cfg.n, rank, lowrank_seed)
    mask = gen_mask(cfg.m, cfg.n, mask_spec(cfg, sr, mask_seed))
    lam = lambda_for(cfg, x_star)
    instance = ProblemInstance.from_observation(observe(x_star, mask), mask, lam, cfg.p, x_star=x_star)
    return instance, init_seed


def trace_frame(records: Sequence[IterationRecord], certificates: bool = False) -> pd.DataFrame:
    columns = dict(TRACE_COLUMNS)
    if certificates:
        columns.update(CERTIFICATE_COLUMNS)
    rows = [{col: getattr(rec, attr) for col, attr in columns.items()} for rec in records]
    return pd.DataFrame(rows, columns=list(columns))


def write_trace_csv(path: Path, records: Sequence[IterationRecord], certificates: bool = False):
    path.parent.mkdir(parents=True, exist_ok=True)
    trace_frame(records, certificates).to_csv(path, index=False, float_format="%.17g", na_rep="")


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _finite_or_none(value) -> Optional[float]:
    if value is None:
        return None
    value = float(value)
    return value if math.isfinite(value) else None


class RunSpec(NamedTuple):
    variant: Variant
    alpha: float
    rank: int
    sr: float
    seed: int

    @property
    def trace_name(self) -> str:
        return f"{self.variant.value}_a{self.alpha:g}_r{self.rank}_sr{self.sr:g}_s{self.seed}.csv"


def plan_runs(cfg: ExperimentConfig) -> Tuple[List[RunSpec], List[float]]:
    """
    The synth grid. IRNRI and PIRNN run once with alpha = 0; EIRNRI alphas
    at or above the cap are skipped with a warning.
    """
    # surfaces beta <= L_f before anything runs
    validate_alpha(0.0, cfg.solver.beta, 1.0, cfg.solver.convex_loss)
    plan: List[RunSpec] = []
    skipped: List[float] = []
    for variant in dict.fromkeys(cfg.variants):
        alphas = cfg.alphas if variant == Variant.EIRNRI else [0.0]
        for alpha in dict.fromkeys(alphas):
            if variant == Variant.EIRNRI:
                try:
                    validate_alpha(alpha, cfg.solver.beta, 1.0, cfg.solver.convex_loss)
                except ConfigurationError as e:
                    logger.warning(f"skipping {e}")
                    skipped.append(alpha)
                    continue
            for rank in dict.fromkeys(cfg.ranks):
                for sr in dict.fromkeys(cfg.srs):
                    for i in range(cfg.seeds):
                        plan.append(RunSpec(variant, alpha, rank, sr, cfg.seed + i))
    return plan, skipped


def run_one(cfg: ExperimentConfig, spec: RunSpec, trace_dir: Path) -> RunResult:
    instance, init_seed = synth_instance(cfg, spec.rank, spec.sr, spec.seed)
    solver_cfg = cfg.solver.model_copy(update=dict(variant=spec.variant, alpha=spec.alpha, rng_seed=init_seed))
    path = trace_dir / spec.trace_name
    base = dict(variant=spec.variant, alpha=spec.alpha, rank=spec.rank, sr=spec.sr, seed=spec.seed,
                lam=instance.lam, trace_file=str(path))
    try:
        outcome = solve(instance, solver_cfg)
    except CertifiedFailureError as e:
        logger.error(f"{spec.trace_name}: {e}")
        write_trace_csv(path, e.trace)
        return RunResult(**base, iterations=e.k, failed_check=e.check, error=str(e))
    except NumericalError as e:
        logger.error(f"{spec.trace_name}: {e}")
        write_trace_csv(path, [])
        return RunResult(**base, iterations=0, failed_check="numerical", error=str(e))

    write_trace_csv(path, outcome.trace)
    last = outcome.trace[-1]
    return RunResult(
        **base,
        iterations=outcome.iterations,
        stop_reason=outcome.stop_reason,
        rank_final=outcome.rank_final,
        rel_err=last.rel_err,
        rel_dist=last.rel_dist,
        success=last.rel_err is not None and last.rel_err <= SUCCESS_TOL,
        cld=outcome.rank_final == spec.rank,
        iters_to_reldist=next((rec.k for rec in outcome.trace if rec.rel_dist <= SUCCESS_TOL), None),
    )


def _numeric(series: pd.Series) -> pd.Series:
    return pd.to_numeric(series, errors="coerce").astype(float)


def summarize(results: List[RunResult]) -> List[CellSummary]:
    if not results:
        return []
    df = pd.DataFrame([r.model_dump(mode="json") for r in results])
    df["failed"] = df["failed_check"].notna()
    cells = []
    for (variant, alpha, rank, sr), group in df.groupby(["variant", "alpha", "rank", "sr"], sort=False):
        ok = group[~group["failed"]]
        succ = ok[ok["success"]]
        cells.append(CellSummary(
            variant=variant,
            alpha=float(alpha),
            rank=int(rank),
            sr=float(sr),
            runs=len(group),
            successes=int(ok["success"].sum()),
            cld=int(ok["cld"].sum()),
            failures=int(group["failed"].sum()),
            mean_rel_err=_finite_or_none(_numeric(ok["rel_err"]).mean()),
            mean_rel_err_success=_finite_or_none(_numeric(succ["rel_err"]).mean()),
            median_iterations=_finite_or_none(_numeric(ok["iterations"]).median()),
            median_iters_to_reldist=_finite_or_none(_numeric(ok["iters_to_reldist"]).median()),
        ))
    return cells


def cmd_synth(cfg: ExperimentConfig) -> int:
    out_dir = Path(cfg.out_dir)
    trace_dir = out_dir / "traces"
    trace_dir.mkdir(parents=True, exist_ok=True)
    plan, skipped = plan_runs(cfg)
    logger.info(f"synth: {len(plan)} runs on {cfg.workers} worker(s), output in {out_dir}")

    with ThreadPoolExecutor(max_workers=cfg.workers) as executor:
        results = list(tqdm(
            executor.map(partial(run_one, cfg, trace_dir=trace_dir), plan),
            total=len(plan), desc="synth"))

    cells = summarize(results)
    for cell in cells:
        logger.info(
            f"{cell.variant.value} alpha={cell.alpha:g} r={cell.rank} sr={cell.sr:g}: "
            f"{cell.successes}/{cell.runs} recovered, CLD {cell.cld}, failures {cell.failures}")
    failures = sum(cell.failures for cell in cells)
    summary = SynthSummary(
        timestamp=_now(),
        config=cfg,
        runs=len(results),
        failures=failures,
        skipped_alphas=skipped,
        cells=cells,
        results=results,
    )
    (out_dir / "summary.json").write_text(summary.model_dump_json(indent=2), encoding="utf-8")
    return 1 if failures else 0


def cmd_image(cfg: ExperimentConfig) -> int:
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    image = load_image(cfg.input)
    m, n, channels = image.shape
    rank = cfg.ranks[0]
    if rank > min(m, n):
        raise ConfigurationError(f"rank {rank} exceeds min(m, n) = {min(m, n)} of {cfg.input}")
    _, mask_seed, init_seed = derive_seeds(cfg.seed)
    validate_alpha(cfg.alphas[0], cfg.solver.beta, 1.0, cfg.solver.convex_loss)

    target = image_to_lowrank_target(image, rank)
    mask = gen_mask(m, n, mask_spec(cfg, cfg.srs[0], mask_seed))
    lam = lambda_for(cfg, target)
    solver_cfg = cfg.solver.model_copy(
        update=dict(variant=cfg.variants[0], alpha=cfg.alphas[0], rng_seed=init_seed))
    masked = np.stack([observe(target[:, :, c], mask) for c in range(channels)], axis=2)
    logger.info(f"image {cfg.input}: {m}x{n}x{channels}, rank {rank}, {len(mask)} observed pixels, lambda={lam}")

    def solve_channel(c: int) -> SolveOutcome:
        instance = ProblemInstance.from_observation(masked[:, :, c], mask, lam, cfg.p)
        return solve(instance, solver_cfg)

    summary = dict(timestamp=_now(), config=cfg, shape=(m, n, channels), target_rank=rank, observed=len(mask))
    save_image(out_dir / "target.png", target)
    save_image(out_dir / "masked.png", masked)
    try:
        with ThreadPoolExecutor(max_workers=min(cfg.workers, channels)) as executor:
            outcomes = list(executor.map(solve_channel, range(channels)))
    except (CertifiedFailureError, NumericalError) as e:
        logger.error(f"image solve failed: {e}")
        failed_check = e.check if isinstance(e, CertifiedFailureError) else "numerical"
        report = ImageSummary(**summary, psnr=None, psnr_masked=psnr(masked, target), channels=[],
                              failed_check=failed_check)
        (out_dir / "image_summary.json").write_text(report.model_dump_json(indent=2), encoding="utf-8")
        return 1

    restored = np.clip(np.stack([o.x_final for o in outcomes], axis=2), 0.0, 255.0)
    save_image(out_dir / "restored.png", restored)
    report = ImageSummary(
        **summary,
        psnr=psnr(restored, target),
        psnr_masked=psnr(masked, target),
        channels=[
            ChannelResult(channel=c, rank=o.rank_final, iterations=o.iterations, stop_reason=o.stop_reason,
                          rel_dist=o.trace[-1].rel_dist)
            for c, o in enumerate(outcomes)
        ],
    )
    logger.info(f"PSNR {report.psnr:.3f} dB, ranks {[ch.rank for ch in report.channels]}")
    (out_dir / "image_summary.json").write_text(report.model_dump_json(indent=2), encoding="utf-8")
    return 0


def cmd_trace(cfg: ExperimentConfig) -> int:
    """One fully recorded solve with its certificate audit."""
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rank_target: Optional[int] = cfg.ranks[0]
    if cfg.snapshot:
        instance = load_snapshot(cfg.snapshot)
        _, _, init_seed = derive_seeds(cfg.seed)
        rank_target = (rank_of(svd_ordered(instance.x_star).s, relative=True)
                       if instance.x_star is not None else None)
    else:
        instance, init_seed = synth_instance(cfg, cfg.ranks[0], cfg.srs[0], cfg.seed)
    if cfg.save_snapshot:
        save_snapshot(cfg.save_snapshot, instance)

    solver_cfg = cfg.solver.model_copy(update=dict(
        variant=cfg.variants[0], alpha=cfg.alphas[0], rng_seed=init_seed, keep_eps_history=True, trace_every=1))
    failed_check = None
    outcome = None
    try:
        outcome = solve(instance, solver_cfg)
        records = outcome.trace
    except CertifiedFailureError as e:
        logger.error(f"trace run failed: {e}")
        records = e.trace
        failed_check = e.check

    write_trace_csv(out_dir / "trace.csv", records, certificates=True)
    m_norm = float(np.linalg.norm(instance.observed))
    kkt_tol = KKT_TOLERANCE * max(1.0, m_norm)
    certificates = certificate_report(records, kkt_tol, m_norm)
    eps_dynamics = None
    if records and solver_cfg.variant != Variant.PIRNN:
        eps_dynamics = eps_dynamics_report(records, solver_cfg.mu)
    report = TraceReport(
        timestamp=_now(),
        config=cfg,
        m=instance.m,
        n=instance.n,
        rank_target=rank_target,
        stop_reason=outcome.stop_reason if outcome else None,
        iterations=outcome.iterations if outcome else len(records),
        rank_final=outcome.rank_final if outcome else None,
        rel_err_final=records[-1].rel_err if records else None,
        rel_dist_final=records[-1].rel_dist if records else None,
        kkt_tolerance=kkt_tol,
        certificates=certificates,
        eps_dynamics=eps_dynamics,
        step_rate=fit_geometric_rate([rec.step_fro for rec in records], tail=50),
        failed_check=failed_check,
    )
    (out_dir / "trace_report.json").write_text(report.model_dump_json(indent=2), encoding="utf-8")
    if eps_dynamics is not None:
        logger.info(f"rank settled at {eps_dynamics.final_rank} from iteration {eps_dynamics.identified_at}")
    logger.info(f"certificates {'passed' if certificates.passed else 'FAILED'}: {certificates}")
    return 0 if failed_check is None and certificates.passed else 1
