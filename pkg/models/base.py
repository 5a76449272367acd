from abc import ABC, abstractmethod
from typing import Generic, TypeVar, Protocol

import numpy as np

from data.design import DesignMatrices
from utils.loggerext import LoggerExt

_TFit = TypeVar('_TFit')


class FitterBase(ABC, LoggerExt, Generic[_TFit]):
    """
    A named estimation engine. ``fit`` is pure with respect to the design; per-fit state lives in locals.
    """

    def __init__(self, name: str, tol: float, max_iter: int):
        LoggerExt.__init__(self, log_tag=name)
        if not tol > 0:
            raise ValueError(f'{name}: tolerance must be positive, got {tol}')
        if max_iter < 1:
            raise ValueError(f'{name}: max_iter must be at least 1, got {max_iter}')
        self.name = name
        self.tol = tol
        self.max_iter = max_iter

    @abstractmethod
    def fit(self, design: DesignMatrices) -> _TFit:
        ...


class LogDensityModel(Protocol):
    """Anything the sampler can run on: an unconstrained log density with its gradient."""

    @property
    def dim(self) -> int: ...

    def log_density_and_grad(self, theta: np.ndarray) -> tuple[float, np.ndarray]: ...


def full_design_matrix(design: DesignMatrices) -> np.ndarray:
    """``[1 | X]``: the intercept column the fitters estimate along with ``X``."""
    return np.hstack([np.ones((design.n, 1)), design.X])
