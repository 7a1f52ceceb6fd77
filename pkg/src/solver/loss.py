from abc import ABC, abstractmethod

import numpy as np

from src.solver.errors import InvalidArgumentError
from src.solver.models import ProblemInstance


class SmoothLoss(ABC):
    """Value / gradient / Lipschitz view of the smooth part f of the objective."""

    @abstractmethod
    def value(self, x: np.ndarray) -> float:
        ...

    @abstractmethod
    def gradient(self, x: np.ndarray) -> np.ndarray:
        ...

    @property
    @abstractmethod
    def lipschitz(self) -> float:
        ...

    @property
    def convex(self) -> bool:
        return False


class MatrixCompletionLoss(SmoothLoss):
    """f(X) = 1/2 ||M - P_Omega(X)||_F^2"""

    def __init__(self, instance: ProblemInstance):
        self.instance = instance
        self._rows = instance.rows
        self._cols = instance.cols
        self._m_obs = instance.observed[self._rows, self._cols]

    def _residual(self, x: np.ndarray) -> np.ndarray:
        _check_shape(self.instance, x)
        return x[self._rows, self._cols] - self._m_obs

    def value(self, x: np.ndarray) -> float:
        r = self._residual(x)
        return 0.5 * float(r @ r)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        g = np.zeros_like(self.instance.observed)
        g[self._rows, self._cols] = self._residual(x)
        return g

    @property
    def lipschitz(self) -> float:
        return 1.0

    @property
    def convex(self) -> bool:
        return True


def _check_shape(instance: ProblemInstance, x: np.ndarray):
    if x.shape != instance.observed.shape:
        raise InvalidArgumentError(
            f"expected a {instance.m}x{instance.n} matrix, got shape {x.shape}")


def loss_value(instance: ProblemInstance, x: np.ndarray) -> float:
    return MatrixCompletionLoss(instance).value(x)


def loss_gradient(instance: ProblemInstance, x: np.ndarray) -> np.ndarray:
    return MatrixCompletionLoss(instance).gradient(x)


def objective_value(instance: ProblemInstance, x: np.ndarray, sigma: np.ndarray) -> float:
    """F(X) = f(X) + lambda * sum sigma_i^p, with sigma supplied by the caller."""
    sigma = np.asarray(sigma, dtype=np.float64)
    return loss_value(instance, x) + instance.lam * float(np.sum(sigma ** instance.p))
