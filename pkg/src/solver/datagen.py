import math
from typing import List, Tuple, Union

import numpy as np

from src.solver.errors import InvalidArgumentError
from src.solver.models import MaskKind, MaskSpec

SeedLike = Union[int, np.random.SeedSequence, np.random.Generator]

# fraction of pixels hidden by the default block mask
DEFAULT_BLOCK_FRACTION = 0.06


def make_rng(seed: SeedLike) -> np.random.Generator:
    """PCG64 generator; an existing Generator is passed through."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(seed))


def gen_lowrank(m: int, n: int, r: int, seed: SeedLike) -> np.ndarray:
    """X* = B C with B (m x r) and C (r x n) i.i.d. standard normal."""
    if m < 1 or n < 1:
        raise InvalidArgumentError(f"dimensions must be positive, got {m}x{n}")
    if not 1 <= r <= min(m, n):
        raise InvalidArgumentError(f"rank must lie in [1, {min(m, n)}], got {r}")
    rng = make_rng(seed)
    b = rng.standard_normal((m, r))
    c = rng.standard_normal((r, n))
    return b @ c


def sample_count(m: int, n: int, sampling_ratio: float) -> int:
    """ceil(SR * m * n); the guard keeps 0.2 * 22500 at 4500 instead of 4501."""
    return int(math.ceil(sampling_ratio * m * n - 1e-9))


def default_block_rects(m: int, n: int) -> List[Tuple[int, int, int, int]]:
    side = max(1, int(round(math.sqrt(DEFAULT_BLOCK_FRACTION) * min(m, n))))
    return [((m - side) // 2, (n - side) // 2, side, side)]


def gen_mask(m: int, n: int, spec: MaskSpec) -> np.ndarray:
    """Observed (row, col) pairs, sorted row-major."""
    if spec.kind == MaskKind.RANDOM_UNIFORM:
        sr = spec.sampling_ratio
        if sr is None or not 0 < sr <= 1:
            raise InvalidArgumentError(f"sampling ratio must lie in (0, 1], got {sr}")
        count = sample_count(m, n, sr)
        rng = make_rng(spec.seed)
        flat = np.sort(rng.choice(m * n, size=count, replace=False))
        return np.stack(np.unravel_index(flat, (m, n)), axis=1).astype(np.int64)

    rects = spec.rects or default_block_rects(m, n)
    keep = np.ones((m, n), dtype=bool)
    for row, col, height, width in rects:
        if row + height > m or col + width > n:
            raise InvalidArgumentError(f"block {(row, col, height, width)} exceeds a {m}x{n} image")
        keep[row:row + height, col:col + width] = False
    return np.argwhere(keep).astype(np.int64)


def observe(x_star: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """P_Omega(X*)"""
    res = np.zeros_like(x_star, dtype=np.float64)
    res[mask[:, 0], mask[:, 1]] = x_star[mask[:, 0], mask[:, 1]]
    return res


def sample_picture(size: int = 300) -> np.ndarray:
    """
    Deterministic size x size x 3 picture in [0, 255]: smooth gradients with a
    rectangle, a disc and a stripe on top.
    """
    yy, xx = np.mgrid[0:size, 0:size] / (size - 1)
    red = 200 * xx + 40 * np.sin(6 * np.pi * yy)
    green = 180 * yy * (1 - xx) + 50
    blue = 120 + 100 * np.cos(4 * np.pi * xx * yy)
    image = np.stack([red, green, blue], axis=2)
    image[size // 5:size * 7 // 15, size * 2 // 15:size * 2 // 5] = (240, 220, 40)
    image[((yy - 0.65) ** 2 + (xx - 0.6) ** 2) < 0.03] = (30, 60, 200)
    image[size * 2 // 3:size * 43 // 60, :] = (250, 250, 250)
    return np.clip(image, 0.0, 255.0)
