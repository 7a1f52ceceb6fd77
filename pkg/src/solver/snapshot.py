import logging
import zipfile
from pathlib import Path
from typing import Union

import numpy as np

from src.solver.errors import ImageIOError
from src.solver.models import ProblemInstance

logger = logging.getLogger(__name__)


def save_snapshot(path: Union[str, Path], instance: ProblemInstance):
    """
    Stores M, the sampled pairs, lambda, p and X* (if any) as float64/int64
    arrays in the caller's orientation, so reloading reproduces the instance exactly.
    """
    observed = instance.to_original(instance.observed)
    mask = instance.mask[:, ::-1] if instance.transposed else instance.mask
    arrays = dict(
        observed=observed,
        mask=np.ascontiguousarray(mask),
        lam=np.float64(instance.lam),
        p=np.float64(instance.p),
        lipschitz=np.float64(instance.lipschitz),
    )
    if instance.x_star is not None:
        arrays["x_star"] = instance.to_original(instance.x_star)
    with open(path, "wb") as f:
        np.savez(f, **arrays)
    logger.info(f"snapshot written to {path}")


def load_snapshot(path: Union[str, Path]) -> ProblemInstance:
    try:
        with np.load(path, allow_pickle=False) as data:
            arrays = {name: data[name] for name in data.files}
        observed, mask, lam, p = arrays["observed"], arrays["mask"], float(arrays["lam"]), float(arrays["p"])
    except (OSError, KeyError, ValueError, zipfile.BadZipFile) as e:
        raise ImageIOError(f"cannot read snapshot {path}: {e}") from e
    # a readable file with inconsistent contents raises InvalidArgumentError from here
    return ProblemInstance.from_observation(
        observed,
        mask,
        lam=lam,
        p=p,
        x_star=arrays.get("x_star"),
        lipschitz=float(arrays["lipschitz"]) if "lipschitz" in arrays else 1.0,
    )
