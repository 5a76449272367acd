"""
Logistic GLM by Fisher scoring (IRLS) with step-halving.

Under separation the likelihood keeps rising towards a supremum that is never attained: each Newton step
moves the separating coefficient by a roughly constant amount while the log-likelihood gain vanishes.
The fitter stops there and reports the coefficient trajectory instead of pretending to converge.
"""
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.special import expit

from data.design import DesignMatrices, INTERCEPT
from errors import MleError
from .base import FitterBase, full_design_matrix

_HALVINGS = 30
_EPS = np.finfo(float).eps


@dataclass
class GlmFit:
    coefficients: np.ndarray
    names: tuple[str, ...]
    standard_errors: np.ndarray
    iterations: int
    converged: bool
    trajectory: np.ndarray
    deviance: float
    log_likelihood_path: np.ndarray = field(default_factory=lambda: np.zeros(0))
    message: str = ''

    @property
    def log_likelihood(self) -> float:
        return -0.5 * self.deviance

    @property
    def max_abs_coefficient(self) -> float:
        return float(np.max(np.abs(self.coefficients))) if len(self.coefficients) else 0.0

    def to_dict(self) -> dict:
        return {
            'engine': 'irls',
            'converged': self.converged,
            'iterations': self.iterations,
            'message': self.message,
            'deviance': self.deviance,
            'coefficients': {name: {'estimate': b, 'se': se}
                             for name, b, se in zip(self.names, self.coefficients.tolist(),
                                                    self.standard_errors.tolist())},
            'trajectory': self.trajectory.tolist(),
            'log_likelihood_path': self.log_likelihood_path.tolist(),
        }


def log_likelihood(A: np.ndarray, y: np.ndarray, beta: np.ndarray) -> float:
    eta = A @ beta
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


def working_quantities(eta: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Residual ``y - mu`` and weight ``mu (1 - mu)``, both without cancellation when |eta| is large."""
    mu, one_minus_mu = expit(eta), expit(-eta)
    return y * one_minus_mu - (1.0 - y) * mu, mu * one_minus_mu


class IrlsFitter(FitterBase[GlmFit]):

    def __init__(self, tol: float = 1e-8, max_iter: int = 100):
        super().__init__('irls', tol, max_iter)

    def fit(self, design: DesignMatrices) -> GlmFit:
        """
        Raises:
            MleError: ``[1 | X]`` is rank deficient.
        """
        if design.blocks:
            self.debug(f'ignoring {len(design.blocks)} random blocks; fitting the fixed part only')
        A = full_design_matrix(design)
        y = np.asarray(design.y, dtype=float)
        names = (INTERCEPT, *design.column_names)
        rank = np.linalg.matrix_rank(A) if design.n else 0
        if rank < A.shape[1]:
            raise MleError(f'design matrix is rank deficient (rank {rank} < {A.shape[1]} columns)')

        beta = np.zeros(A.shape[1])
        ll = log_likelihood(A, y, beta)
        trajectory, ll_path = [], []
        converged = False
        message = f'iteration limit {self.max_iter} reached'
        with np.errstate(over='ignore', under='ignore'):
            for _ in range(self.max_iter):
                r, w = working_quantities(A @ beta, y)
                try:
                    delta = np.linalg.solve(A.T @ (w[:, None] * A), A.T @ r)
                except np.linalg.LinAlgError as e:
                    message = f'information matrix singular: {e}'
                    break
                if not np.all(np.isfinite(delta)):
                    message = 'non-finite update (weights underflowed)'
                    break
                if np.max(np.abs(delta)) < self.tol:
                    beta = beta + delta
                    ll = log_likelihood(A, y, beta)
                    trajectory.append(float(np.linalg.norm(beta)))
                    ll_path.append(ll)
                    converged = True
                    message = 'converged'
                    break

                step = 1.0
                for _ in range(_HALVINGS + 1):
                    candidate = beta + step * delta
                    ll_new = log_likelihood(A, y, candidate)
                    if np.isfinite(ll_new) and ll_new >= ll - 1e-12 * abs(ll):
                        break
                    step *= 0.5
                else:
                    message = 'step-halving failed to increase the likelihood'
                    break

                gain = ll_new - ll
                beta, ll = candidate, ll_new
                trajectory.append(float(np.linalg.norm(beta)))
                ll_path.append(ll)
                if gain <= 16 * _EPS * max(abs(ll), 1.0) and np.max(np.abs(step * delta)) > 1e-6:
                    message = 'coefficients still moving without likelihood gain'
                    break

        fit = GlmFit(beta, names, self._standard_errors(A, y, beta), len(trajectory), converged,
                     np.asarray(trajectory), -2.0 * ll, np.asarray(ll_path), message)
        log = self.info if converged else self.warning
        log(f'{message} after {fit.iterations} iterations; max |beta| = {fit.max_abs_coefficient:.3g}, '
            f'deviance = {fit.deviance:.4f}')
        return fit

    @staticmethod
    def _standard_errors(A: np.ndarray, y: np.ndarray, beta: np.ndarray) -> np.ndarray:
        _, w = working_quantities(A @ beta, y)
        try:
            covariance = np.linalg.inv(A.T @ (w[:, None] * A))
        except np.linalg.LinAlgError:
            return np.full(len(beta), np.nan)
        with np.errstate(invalid='ignore'):
            return np.sqrt(np.diag(covariance))


def fit_glm_irls(design: DesignMatrices, tol: float = 1e-8, max_iter: int = 100) -> GlmFit:
    return IrlsFitter(tol, max_iter).fit(design)


class DivergenceVerdict(Enum):
    CONVERGED = 'converged'
    DIVERGING = 'diverging'
    STALLED = 'stalled'


DIVERGENCE_THRESHOLD = 8.0
_GROWTH_WINDOW = 5


def detect_mle_divergence(fit: GlmFit) -> DivergenceVerdict:
    """
    ``diverging``: not converged, some |coefficient| above 8 and the coefficient norm strictly increasing
    over the last five iterations. Non-converged fits with fewer iterations or no growth are ``stalled``.
    """
    if fit.converged:
        return DivergenceVerdict.CONVERGED
    tail = np.asarray(fit.trajectory[-_GROWTH_WINDOW:])
    growing = fit.iterations >= _GROWTH_WINDOW and len(tail) == _GROWTH_WINDOW and bool(np.all(np.diff(tail) > 0))
    if growing and fit.max_abs_coefficient > DIVERGENCE_THRESHOLD:
        return DivergenceVerdict.DIVERGING
    return DivergenceVerdict.STALLED
