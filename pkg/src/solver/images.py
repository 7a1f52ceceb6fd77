import logging
from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image, UnidentifiedImageError

from src.solver.errors import ImageIOError, InvalidArgumentError
from src.solver.svd import svd_ordered

logger = logging.getLogger(__name__)

# modes Pillow can hand back that we fold into L / RGB
_CONVERT = {"P": "RGB", "RGBA": "RGB", "LA": "L", "1": "L", "CMYK": "RGB", "YCbCr": "RGB"}


def load_image(path: Union[str, Path]) -> np.ndarray:
    """8-bit PNG as a float64 array of shape (m, n, c), c in {1, 3}, values in [0, 255]."""
    try:
        with Image.open(path) as img:
            img.load()
            mode = img.mode
            if mode in ("I", "I;16", "I;16B", "I;16L", "F"):
                raise ImageIOError(f"{path}: unsupported bit depth (mode {mode}), expected 8-bit")
            if mode in _CONVERT:
                logger.info(f"{path}: converting mode {mode} to {_CONVERT[mode]}")
                img = img.convert(_CONVERT[mode])
            arr = np.asarray(img, dtype=np.float64)
    except (FileNotFoundError, UnidentifiedImageError, OSError) as e:
        if isinstance(e, ImageIOError):
            raise
        raise ImageIOError(f"cannot read image {path}: {e}") from e
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return arr


def to_uint8(image: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(image), 0, 255).astype(np.uint8)


def save_image(path: Union[str, Path], image: np.ndarray):
    """Round to nearest, clamp to [0, 255] and write a grayscale or RGB PNG."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        image = image[:, :, None]
    if image.ndim != 3 or image.shape[2] not in (1, 3):
        raise InvalidArgumentError(f"expected an (m, n, 1) or (m, n, 3) image, got shape {image.shape}")
    pixels = to_uint8(image)
    img = Image.fromarray(pixels[:, :, 0] if pixels.shape[2] == 1 else pixels)
    try:
        img.save(path, format="PNG")
    except OSError as e:
        raise ImageIOError(f"cannot write image {path}: {e}") from e


def truncate_rank(a: np.ndarray, r: int) -> np.ndarray:
    """Best rank-r approximation of a matrix (no clamping)."""
    if not 1 <= r <= min(a.shape):
        raise InvalidArgumentError(f"rank must lie in [1, {min(a.shape)}], got {r}")
    svd = svd_ordered(np.asarray(a, dtype=np.float64))
    return (svd.u[:, :r] * svd.s[:r]) @ svd.v[:, :r].T


def image_to_lowrank_target(image: np.ndarray, r: int) -> np.ndarray:
    """Per-channel rank-r truncation clamped back to [0, 255]."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3:
        raise InvalidArgumentError(f"expected an (m, n, c) image, got shape {image.shape}")
    channels = [truncate_rank(image[:, :, c], r) for c in range(image.shape[2])]
    return np.clip(np.stack(channels, axis=2), 0.0, 255.0)
