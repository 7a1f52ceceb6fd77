from enum import Enum
from typing import Any, Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.solver.models import CertificateReport, EpsDynamicsReport, SolverConfig, StopReason, Variant


class Command(str, Enum):
    SYNTH = "synth"
    IMAGE = "image"
    TRACE = "trace"


class ExperimentConfig(BaseModel):
    """
    Parameters of one CLI invocation. `ranks`, `srs`, `variants` and
    `alphas` are grid axes for synth; image and trace take one value each.
    Exactly one of `lam` (absolute) and `lam_rel` (times ||X*||_inf) is set.
    """
    command: Command
    m: int = Field(default=150, ge=1)
    n: int = Field(default=150, ge=1)
    ranks: List[int] = Field(default_factory=lambda: [5], min_length=1)
    srs: List[float] = Field(default_factory=lambda: [0.5], min_length=1)
    variants: List[Variant] = Field(default_factory=lambda: [Variant.EIRNRI], min_length=1)
    alphas: List[float] = Field(default_factory=lambda: [0.7], min_length=1)
    lam: Optional[float] = Field(default=None, gt=0)
    lam_rel: Optional[float] = Field(default=0.1, gt=0)
    p: float = Field(default=0.5, gt=0, lt=1)
    seed: int = Field(default=0, ge=0)
    seeds: int = Field(default=50, ge=1)
    workers: int = Field(default=1, ge=1)
    out_dir: str = "out"
    mask: Literal["random", "block"] = "random"
    block_rects: List[Tuple[int, int, int, int]] = Field(default_factory=list)
    input: Optional[str] = None
    snapshot: Optional[str] = None
    save_snapshot: Optional[str] = None
    solver: SolverConfig = Field(default_factory=SolverConfig)

    @field_validator("variants", mode="before")
    @classmethod
    def _upper_variants(cls, v):
        if isinstance(v, list):
            return [x.upper() if isinstance(x, str) else x for x in v]
        return v

    @model_validator(mode="after")
    def _check(self) -> "ExperimentConfig":
        if (self.lam is None) == (self.lam_rel is None):
            raise ValueError("set exactly one of lam and lam_rel")
        if any(r < 1 or r > min(self.m, self.n) for r in self.ranks):
            raise ValueError(f"ranks must lie in [1, {min(self.m, self.n)}], got {self.ranks}")
        if any(not 0 < sr <= 1 for sr in self.srs):
            raise ValueError(f"sampling ratios must lie in (0, 1], got {self.srs}")
        if any(a < 0 for a in self.alphas):
            raise ValueError(f"alphas must be nonnegative, got {self.alphas}")
        if self.command != Command.SYNTH:
            for name in ("ranks", "srs", "variants", "alphas"):
                if len(getattr(self, name)) != 1:
                    raise ValueError(f"{self.command.value} takes a single value for {name}")
        if self.command == Command.IMAGE and not self.input:
            raise ValueError("image needs an input PNG")
        return self


# defaults per subcommand, below config files and flags in precedence
COMMAND_DEFAULTS: Dict[Command, Dict[str, Any]] = {
    Command.SYNTH: dict(
        m=150, n=150, ranks=[5, 10, 15], srs=[0.2, 0.5, 0.8], lam_rel=0.1, p=0.5, seeds=50,
    ),
    Command.IMAGE: dict(
        ranks=[30], srs=[0.8], lam=0.5, lam_rel=None, p=0.5, seeds=1,
        solver=dict(klopt=1e-5, eps_fixed=1e-4),
    ),
    Command.TRACE: dict(
        m=15, n=15, ranks=[3], srs=[0.5], lam=0.1, lam_rel=None, p=0.5, seeds=1,
        solver=dict(keep_eps_history=True),
    ),
}


class RunResult(BaseModel):
    variant: Variant
    alpha: float
    rank: int
    sr: float
    seed: int
    lam: float
    trace_file: str
    iterations: int
    stop_reason: Optional[StopReason] = None
    rank_final: Optional[int] = None
    rel_err: Optional[float] = None
    rel_dist: Optional[float] = None
    success: bool = False
    cld: bool = False
    iters_to_reldist: Optional[int] = None
    failed_check: Optional[str] = None
    error: Optional[str] = None


class CellSummary(BaseModel):
    variant: Variant
    alpha: float
    rank: int
    sr: float
    runs: int
    successes: int
    cld: int
    failures: int
    mean_rel_err: Optional[float] = None
    mean_rel_err_success: Optional[float] = None
    median_iterations: Optional[float] = None
    median_iters_to_reldist: Optional[float] = None


class SynthSummary(BaseModel):
    timestamp: str
    config: ExperimentConfig
    runs: int
    failures: int
    skipped_alphas: List[float] = Field(default_factory=list)
    cells: List[CellSummary]
    results: List[RunResult]


class ChannelResult(BaseModel):
    channel: int
    rank: int
    iterations: int
    stop_reason: StopReason
    rel_dist: float


class ImageSummary(BaseModel):
    # identical images give an infinite PSNR
    model_config = ConfigDict(ser_json_inf_nan="constants")

    timestamp: str
    config: ExperimentConfig
    shape: Tuple[int, int, int]
    target_rank: int
    observed: int
    psnr: Optional[float]
    psnr_masked: Optional[float]
    channels: List[ChannelResult]
    failed_check: Optional[str] = None


class TraceReport(BaseModel):
    timestamp: str
    config: ExperimentConfig
    m: int
    n: int
    rank_target: Optional[int] = None
    stop_reason: Optional[StopReason] = None
    iterations: int
    rank_final: Optional[int] = None
    rel_err_final: Optional[float] = None
    rel_dist_final: Optional[float] = None
    kkt_tolerance: float
    certificates: CertificateReport
    eps_dynamics: Optional[EpsDynamicsReport] = None
    step_rate: Optional[float] = None
    failed_check: Optional[str] = None
