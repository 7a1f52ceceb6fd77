from enum import Enum
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.solver.errors import InvalidArgumentError


class Variant(str, Enum):
    EIRNRI = "EIRNRI"
    IRNRI = "IRNRI"
    PIRNN = "PIRNN"


class StopReason(str, Enum):
    OPTTOL_RELERR = "opttol_relerr"
    OPTTOL_RELDIST = "opttol_reldist"
    KLOPT_STEP = "klopt_step"
    ITMAX = "itmax"


class InitKind(str, Enum):
    GAUSSIAN = "gaussian"
    ZEROS = "zeros"
    LOWRANK = "lowrank"


class MaskKind(str, Enum):
    RANDOM_UNIFORM = "random_uniform"
    BLOCK = "block"


class _ArrayModel(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)


class ProblemInstance(_ArrayModel):
    """
    Matrix completion data: observed entries M on the sample set, the
    Schatten-p weight and exponent. Always stored with m <= n; `transposed`
    records whether the caller's orientation was flipped.
    Build it with `from_observation`, which runs the checks.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    observed: np.ndarray
    mask: np.ndarray
    lam: float = Field(gt=0)
    p: float = Field(gt=0, lt=1)
    lipschitz: float = Field(default=1.0, ge=0)
    x_star: Optional[np.ndarray] = None
    transposed: bool = False

    @property
    def m(self) -> int:
        return self.observed.shape[0]

    @property
    def n(self) -> int:
        return self.observed.shape[1]

    @property
    def rows(self) -> np.ndarray:
        return self.mask[:, 0]

    @property
    def cols(self) -> np.ndarray:
        return self.mask[:, 1]

    def mask_matrix(self) -> np.ndarray:
        res = np.zeros(self.observed.shape, dtype=bool)
        res[self.rows, self.cols] = True
        return res

    def to_original(self, x: np.ndarray) -> np.ndarray:
        """Undo the m <= n normalization on a solver output."""
        return x.T if self.transposed else x

    @classmethod
    def from_observation(
            cls,
            observed,
            mask,
            lam: float,
            p: float,
            x_star=None,
            lipschitz: float = 1.0,
    ) -> "ProblemInstance":
        """
        `mask` is either a boolean matrix shaped like `observed` or a
        sequence of (row, col) pairs.
        """
        observed = np.array(observed, dtype=np.float64)
        if observed.ndim != 2 or observed.size == 0:
            raise InvalidArgumentError(f"observed must be a non-empty matrix, got shape {observed.shape}")
        if not np.all(np.isfinite(observed)):
            raise InvalidArgumentError("observed contains NaN or Inf")
        mask = _as_index_pairs(mask, observed.shape)
        if not lam > 0:
            raise InvalidArgumentError(f"lambda must be positive, got {lam}")
        if not 0 < p < 1:
            raise InvalidArgumentError(f"p must lie in (0, 1), got {p}")

        on_mask = np.zeros(observed.shape, dtype=bool)
        on_mask[mask[:, 0], mask[:, 1]] = True
        if np.any(observed[~on_mask] != 0):
            raise InvalidArgumentError("observed has nonzero entries outside the mask")

        if x_star is not None:
            x_star = np.array(x_star, dtype=np.float64)
            if x_star.shape != observed.shape:
                raise InvalidArgumentError(
                    f"x_star shape {x_star.shape} does not match observed shape {observed.shape}")

        transposed = observed.shape[0] > observed.shape[1]
        if transposed:
            observed = observed.T.copy()
            mask = mask[:, ::-1].copy()
            if x_star is not None:
                x_star = x_star.T.copy()

        return cls(
            observed=observed,
            mask=mask,
            lam=float(lam),
            p=float(p),
            lipschitz=float(lipschitz),
            x_star=x_star,
            transposed=transposed,
        )


def _as_index_pairs(mask, shape: Tuple[int, int]) -> np.ndarray:
    arr = np.asarray(mask)
    if arr.dtype == bool:
        if arr.shape != shape:
            raise InvalidArgumentError(f"boolean mask shape {arr.shape} does not match {shape}")
        return np.argwhere(arr).astype(np.int64)
    if arr.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    arr = arr.astype(np.int64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise InvalidArgumentError(f"mask must be a list of (row, col) pairs, got shape {arr.shape}")
    m, n = shape
    if np.any(arr[:, 0] < 0) or np.any(arr[:, 0] >= m) or np.any(arr[:, 1] < 0) or np.any(arr[:, 1] >= n):
        raise InvalidArgumentError(f"mask entries must lie within [0,{m})x[0,{n})")
    return np.unique(arr, axis=0)


class SolverConfig(BaseModel):
    """
    Defaults are the synthetic-experiment parameters: beta=1.1, mu=0.1,
    eps0=1, alpha=0.7, opttol=1e-5, klopt=1e-7, itmax=1000.
    """
    beta: float = Field(default=1.1, gt=0)
    mu: float = Field(default=0.1, gt=0, lt=1)
    alpha: float = Field(default=0.7, ge=0)
    alpha_cap: Optional[float] = None
    convex_loss: bool = True
    eps0: float = Field(default=1.0, gt=0)
    eps_fixed: float = Field(default=1e-3, gt=0)
    opttol: float = Field(default=1e-5, gt=0)
    klopt: float = Field(default=1e-7, gt=0)
    itmax: int = Field(default=1000, ge=1)
    variant: Variant = Variant.EIRNRI
    rng_seed: int = 0
    init: InitKind = InitKind.GAUSSIAN
    init_rank: Optional[int] = Field(default=None, ge=1)
    stop_on_rel_err: bool = True
    check_certificates: bool = True
    keep_eps_history: bool = False
    trace_every: int = Field(default=1, ge=1)

    @field_validator("variant", mode="before")
    @classmethod
    def _upper_variant(cls, v):
        return v.upper() if isinstance(v, str) else v

    @model_validator(mode="after")
    def _check_alpha_cap(self) -> "SolverConfig":
        if self.alpha_cap is not None and self.alpha > 0 and self.alpha >= self.alpha_cap:
            raise ValueError(f"alpha={self.alpha} must stay below alpha_cap={self.alpha_cap}")
        if self.init == InitKind.LOWRANK and self.init_rank is None:
            raise ValueError("init=lowrank requires init_rank")
        return self

    @property
    def effective_alpha(self) -> float:
        # IRNRI and PIRNN run without extrapolation
        return self.alpha if self.variant == Variant.EIRNRI else 0.0


class ThinSvd(_ArrayModel):
    """A = u @ diag(s) @ v.T with s non-increasing; v is n x r, not transposed."""
    u: np.ndarray
    s: np.ndarray
    v: np.ndarray


class PerturbationState(_ArrayModel):
    eps: np.ndarray
    # indices whose eps did not move in the last update
    frozen: np.ndarray


class IterateState(_ArrayModel):
    x_cur: np.ndarray
    x_prev: np.ndarray
    y: Optional[np.ndarray] = None
    svd: ThinSvd
    perturbation: PerturbationState
    weights: Optional[np.ndarray] = None
    rank: int = 0
    k: int = 0

    @property
    def sigma(self) -> np.ndarray:
        return self.svd.s

    @property
    def eps(self) -> np.ndarray:
        return self.perturbation.eps

    @property
    def support(self) -> range:
        return range(self.rank)

    @property
    def zero_set(self) -> range:
        return range(self.rank, len(self.svd.s))


class SubproblemInput(_ArrayModel):
    step_matrix: np.ndarray
    weights: np.ndarray
    threshold_scale: float = Field(ge=0)


class EpsUpdateInput(_ArrayModel):
    """Supports are prefixes of the sorted spectrum, so only their sizes are passed."""
    sigma_new: np.ndarray
    rank_new: int = Field(ge=0)
    rank_old: int = Field(ge=0)
    eps_old: np.ndarray
    mu: float = Field(gt=0, lt=1)


class IterationRecord(BaseModel):
    k: int
    f_val: float
    penalty_val: float
    objective: float
    merit_h: float
    rel_err: Optional[float] = None
    rel_dist: float
    rank: int
    step_fro: float
    step_inf: float
    eps_max_support: Optional[float] = None
    eps_max_zeroset: Optional[float] = None
    alpha_used: float
    kkt_residual: float = 0.0
    optimality_error: float = 0.0
    h_decrease_margin: float = 0.0
    surrogate_decrease: float = 0.0
    weights_ordered: bool = True
    degenerate_rank: bool = False
    rel_residual: Optional[float] = None
    eps: Optional[List[float]] = None


class SolveOutcome(_ArrayModel):
    x_final: np.ndarray
    rank_final: int
    iterations: int
    stop_reason: StopReason
    trace: List[IterationRecord]
    sigma_final: np.ndarray
    eps_final: np.ndarray
    config: SolverConfig


class MaskSpec(BaseModel):
    kind: MaskKind = MaskKind.RANDOM_UNIFORM
    sampling_ratio: Optional[float] = Field(default=None, gt=0, le=1)
    # (row, col, height, width) rectangles that are hidden
    rects: List[Tuple[int, int, int, int]] = Field(default_factory=list)
    seed: int = 0

    @model_validator(mode="after")
    def _check_kind(self) -> "MaskSpec":
        if self.kind == MaskKind.RANDOM_UNIFORM and self.sampling_ratio is None:
            raise ValueError("random_uniform masks need sampling_ratio")
        for rect in self.rects:
            if rect[2] <= 0 or rect[3] <= 0 or rect[0] < 0 or rect[1] < 0:
                raise ValueError(f"invalid block rectangle {rect}")
        return self


class EpsDynamicsReport(BaseModel):
    identified_at: int
    final_rank: int
    support_decay_exact: bool
    zeroset_frozen_from: int


class CertificateReport(BaseModel):
    iterations: int
    h_violations: int
    min_h_margin: float
    surrogate_violations: int
    weights_ordered: bool
    max_kkt_residual: float
    kkt_ok: bool
    final_optimality_error: float
    optimality_ok: bool
    passed: bool
