"""
Weakly informative priors: Cauchy on the intercept and fixed effects, half-Cauchy on random-effect SDs,
LKJ on each random-effect correlation matrix. All densities keep their normalizing constants.
"""
import math
from dataclasses import dataclass, asdict

import numpy as np
from scipy import stats
from scipy.special import betaln

from errors import ConfigError


@dataclass(frozen=True)
class PriorConfig:
    intercept_scale: float = 2.5
    beta_scale: float = 4.0
    sd_scale: float = 2.0
    lkj_eta: float = 2.0

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise ConfigError(f'prior {name} must be a positive number, got {value!r}', module='posterior')

    @property
    def intercept_prior(self):
        return stats.cauchy(loc=0.0, scale=self.intercept_scale)

    @property
    def beta_prior(self):
        return stats.cauchy(loc=0.0, scale=self.beta_scale)

    @property
    def sd_prior(self):
        return stats.halfcauchy(loc=0.0, scale=self.sd_scale)

    def to_dict(self) -> dict:
        return asdict(self)

    def summary(self, mass: float = 0.75) -> dict:
        """Central ``mass`` interval of each scalar prior, for the fit report."""
        tail = 0.5 * (1.0 - mass)
        return {
            'intercept': {'family': f'Cauchy(0, {self.intercept_scale:g})',
                          'interval': [float(self.intercept_prior.ppf(tail)), float(self.intercept_prior.ppf(1 - tail))]},
            'beta': {'family': f'Cauchy(0, {self.beta_scale:g})',
                     'interval': [float(self.beta_prior.ppf(tail)), float(self.beta_prior.ppf(1 - tail))]},
            'sd': {'family': f'HalfCauchy(0, {self.sd_scale:g})',
                   'interval': [0.0, float(self.sd_prior.ppf(mass))]},
            'correlation': {'family': f'LKJ({self.lkj_eta:g})'},
            'mass': mass,
        }


_LOG_PI = math.log(math.pi)
_LOG_2 = math.log(2.0)


def cauchy_logpdf(x: np.ndarray | float, scale: float) -> np.ndarray | float:
    x = np.asarray(x, dtype=float)
    return -_LOG_PI - math.log(scale) - np.log1p((x / scale) ** 2)


def cauchy_logpdf_grad(x: np.ndarray | float, scale: float) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return -2.0 * x / (scale * scale + x * x)


def half_cauchy_logpdf(x: np.ndarray | float, scale: float) -> np.ndarray | float:
    """Density on x >= 0; the caller guarantees positivity."""
    return _LOG_2 + cauchy_logpdf(x, scale)


def lkj_log_normalizer(dim: int, eta: float) -> float:
    """
    log of the LKJ normalizing constant, so that ``det(Omega)^(eta-1) / c`` integrates to one over
    ``dim x dim`` correlation matrices. For dim=2, eta=2 this is log(4/3).
    """
    if dim < 2:
        return 0.0
    total = 0.0
    for k in range(1, dim):
        rest = dim - k
        a = eta + (rest - 1) / 2.0
        total += (2.0 * eta - 2.0 + rest) * rest * _LOG_2 + rest * betaln(a, a)
    return float(total)


def lkj_logpdf(omega: np.ndarray, eta: float) -> float:
    dim = omega.shape[0]
    if dim < 2:
        return 0.0
    sign, logdet = np.linalg.slogdet(omega)
    if sign <= 0:
        return -np.inf
    return float((eta - 1.0) * logdet - lkj_log_normalizer(dim, eta))


def lkj_cholesky_logdet(L: np.ndarray) -> float:
    """log det(L L^T) from the Cholesky factor."""
    return float(2.0 * np.sum(np.log(np.diag(L))))
