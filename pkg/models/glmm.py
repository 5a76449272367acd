"""
Random-intercept logistic GLMM by the Laplace approximation.

For fixed ``(beta, sigma)`` each group's mode ``b_g`` maximizes

    f_g(b) = sum_i [y_i (eta_i + b) - log(1 + exp(eta_i + b))] - b^2 / (2 sigma^2)

and the approximate marginal log-likelihood is ``sum_g f_g(b_g) - 0.5 log(sigma^2 H_g)`` with
``H_g = sum_i w_i + 1 / sigma^2``. Its gradient in ``(beta, log sigma)`` is exact: the modes enter
only through ``H_g`` (envelope theorem), whose derivative is carried through ``d b_g``.
"""
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit

from data.design import DesignMatrices, INTERCEPT
from errors import MleError
from .base import FitterBase, full_design_matrix
from .glm import working_quantities

BOUNDARY_SIGMA = 1e-3
_LOG_SIGMA_BOUNDS = (np.log(1e-8), np.log(1e3))
# fixed sigma below exp(-20), zero included, is evaluated at the floor
_LOG_SIGMA_FLOOR = -20.0
_INNER_TOL = 1e-10
_INNER_MAX_ITER = 100
_POLISH_STEPS = 10


@dataclass
class LaplaceFit:
    coefficients: np.ndarray
    names: tuple[str, ...]
    sigma: float
    modes: np.ndarray
    group: str
    levels: tuple[str, ...]
    converged: bool
    log_likelihood: float
    iterations: int
    gradient_norm: float
    sigma_fixed: bool = False
    message: str = ''

    @property
    def boundary(self) -> bool:
        return self.sigma < BOUNDARY_SIGMA

    @property
    def max_abs_coefficient(self) -> float:
        return float(np.max(np.abs(self.coefficients))) if len(self.coefficients) else 0.0

    def to_dict(self) -> dict:
        return {
            'engine': 'laplace',
            'converged': self.converged,
            'boundary': self.boundary,
            'iterations': self.iterations,
            'message': self.message,
            'log_likelihood': self.log_likelihood,
            'gradient_max_norm': self.gradient_norm,
            'coefficients': {name: b for name, b in zip(self.names, self.coefficients.tolist())},
            'sigma': {'group': self.group, 'estimate': self.sigma, 'fixed': self.sigma_fixed},
            'modes': {level: b for level, b in zip(self.levels, self.modes.tolist())},
        }


def _group_sums(index: np.ndarray, values: np.ndarray, n_groups: int) -> np.ndarray:
    if values.ndim == 1:
        return np.bincount(index, weights=values, minlength=n_groups)
    return np.column_stack([np.bincount(index, weights=values[:, j], minlength=n_groups)
                            for j in range(values.shape[1])])


def _fixed_log_sigma(sigma: float) -> float:
    return _LOG_SIGMA_FLOOR if sigma <= 0 else max(float(np.log(sigma)), _LOG_SIGMA_FLOOR)


class _Problem:
    """Design pieces and the warm-started group modes for one fit."""

    def __init__(self, design: DesignMatrices):
        block = design.blocks[0]
        self.A = full_design_matrix(design)
        self.y = np.asarray(design.y, dtype=float)
        self.index = np.asarray(block.index)
        self.n_groups = block.n_groups
        self.modes = np.zeros(self.n_groups)

    def group_objective(self, eta0: np.ndarray, b: np.ndarray, inv_var: float) -> np.ndarray:
        eta = eta0 + b[self.index]
        return _group_sums(self.index, self.y * eta - np.logaddexp(0.0, eta), self.n_groups) - 0.5 * b * b * inv_var

    def solve_modes(self, eta0: np.ndarray, inv_var: float) -> np.ndarray:
        """Per-group Newton with per-group step-halving."""
        b = self.modes.copy()
        f_old = self.group_objective(eta0, b, inv_var)
        for _ in range(_INNER_MAX_ITER):
            r, w = working_quantities(eta0 + b[self.index], self.y)
            step = (_group_sums(self.index, r, self.n_groups) - b * inv_var) / (
                    _group_sums(self.index, w, self.n_groups) + inv_var)
            scale = np.ones(self.n_groups)
            for _ in range(30):
                candidate = b + scale * step
                f_new = self.group_objective(eta0, candidate, inv_var)
                worse = ~(f_new >= f_old - 1e-12 * np.abs(f_old))
                if not worse.any():
                    break
                scale[worse] *= 0.5
            b, f_old = candidate, f_new
            if np.max(np.abs(scale * step), initial=0.0) < _INNER_TOL:
                break
        self.modes = b
        return b

    def value_and_grad(self, beta: np.ndarray, log_sigma: float) -> tuple[float, np.ndarray, float]:
        """Marginal log-likelihood, its gradient in beta and its derivative in log sigma."""
        sigma2 = np.exp(2.0 * log_sigma)
        inv_var = 1.0 / sigma2
        eta0 = self.A @ beta
        b = self.solve_modes(eta0, inv_var)
        eta = eta0 + b[self.index]
        r, w = working_quantities(eta, self.y)
        mu = expit(eta)
        w_prime = w * (1.0 - 2.0 * mu)
        H = _group_sums(self.index, w, self.n_groups) + inv_var
        f = self.group_objective(eta0, b, inv_var)
        value = float(np.sum(f - 0.5 * np.log(sigma2 * H)))

        db_dbeta = -_group_sums(self.index, w[:, None] * self.A, self.n_groups) / H[:, None]
        s1 = _group_sums(self.index, w_prime, self.n_groups)
        dH_dbeta = _group_sums(self.index, w_prime[:, None] * self.A, self.n_groups) + s1[:, None] * db_dbeta
        grad_beta = self.A.T @ r - 0.5 * np.sum(dH_dbeta / H[:, None], axis=0)

        db_ds = 2.0 * b * inv_var / H
        dH_ds = s1 * db_ds - 2.0 * inv_var
        grad_s = float(np.sum(b * b * inv_var - 1.0 - 0.5 * dH_ds / H))
        return value, grad_beta, grad_s


class LaplaceFitter(FitterBase[LaplaceFit]):

    def __init__(self, tol: float = 1e-6, max_iter: int = 200, fix_sigma: float | None = None):
        super().__init__('laplace', tol, max_iter)
        if fix_sigma is not None and fix_sigma < 0:
            raise ValueError(f'fix_sigma must be non-negative, got {fix_sigma}')
        self.fix_sigma = fix_sigma

    def fit(self, design: DesignMatrices) -> LaplaceFit:
        """
        Raises:
            MleError: the design is not a single random-intercept block, or ``[1 | X]`` is rank deficient.
        """
        if len(design.blocks) != 1 or design.blocks[0].q != 1 or not design.blocks[0].has_intercept:
            raise MleError('the Laplace engine needs exactly one random-intercept-only block')
        block = design.blocks[0]
        A = full_design_matrix(design)
        if np.linalg.matrix_rank(A) < A.shape[1]:
            raise MleError(f'design matrix is rank deficient ({A.shape[1]} columns)')
        names = (INTERCEPT, *design.column_names)

        problem = _Problem(design)
        k = A.shape[1]
        fixed_log_sigma = None if self.fix_sigma is None else _fixed_log_sigma(self.fix_sigma)

        def unpack(theta):
            return theta[:k], (theta[k] if fixed_log_sigma is None else fixed_log_sigma)

        def gradient(theta):
            beta, log_sigma = unpack(theta)
            _, grad_beta, grad_s = problem.value_and_grad(beta, log_sigma)
            return grad_beta if fixed_log_sigma is not None else np.append(grad_beta, grad_s)

        def objective(theta):
            beta, log_sigma = unpack(theta)
            value, grad_beta, grad_s = problem.value_and_grad(beta, log_sigma)
            grad = grad_beta if fixed_log_sigma is not None else np.append(grad_beta, grad_s)
            if not np.isfinite(value):
                return np.inf, np.zeros_like(theta)
            return -value, -grad

        x0 = np.zeros(k) if fixed_log_sigma is not None else np.zeros(k + 1)
        bounds = [(None, None)] * k + ([] if fixed_log_sigma is not None else [_LOG_SIGMA_BOUNDS])
        with np.errstate(over='ignore', under='ignore'):
            result = minimize(objective, x0, jac=True, method='L-BFGS-B', bounds=bounds,
                              options={'maxiter': self.max_iter, 'gtol': self.tol * 1e-2, 'ftol': 1e-15})
            theta = result.x
            grad_norm = self._projected_norm(theta, gradient(theta), bounds)
            steps = 0
            while grad_norm >= self.tol and steps < _POLISH_STEPS:
                polished = self._newton_polish(theta, gradient, bounds)
                if polished is None:
                    break
                new_norm = self._projected_norm(polished, gradient(polished), bounds)
                if not new_norm < grad_norm:
                    break
                theta, grad_norm = polished, new_norm
                steps += 1

        beta, log_sigma = unpack(theta)
        value, _, _ = problem.value_and_grad(beta, log_sigma)
        sigma = float(np.exp(log_sigma)) if fixed_log_sigma is None else float(self.fix_sigma)
        converged = bool(grad_norm < self.tol)
        message = 'converged' if converged else f'gradient max-norm {grad_norm:.3g} above {self.tol:g}: {result.message}'
        fit = LaplaceFit(beta.copy(), names, sigma, problem.modes.copy(), block.group, block.levels, converged,
                         value, int(result.nit) + steps, grad_norm, fixed_log_sigma is not None, message)
        log = self.info if converged else self.warning
        log(f'{message}; sigma = {sigma:.4g}{" (boundary)" if fit.boundary else ""}, '
            f'max |beta| = {fit.max_abs_coefficient:.3g}')
        return fit

    @staticmethod
    def _projected_norm(theta: np.ndarray, grad: np.ndarray, bounds) -> float:
        """Max-norm of the ascent gradient, ignoring components that push against an active bound."""
        grad = grad.copy()
        for j, (low, high) in enumerate(bounds):
            if low is not None and theta[j] <= low + 1e-10 and grad[j] < 0:
                grad[j] = 0.0
            if high is not None and theta[j] >= high - 1e-10 and grad[j] > 0:
                grad[j] = 0.0
        return float(np.max(np.abs(grad))) if len(grad) else 0.0

    @staticmethod
    def _newton_polish(theta: np.ndarray, gradient, bounds) -> np.ndarray | None:
        """One Newton step on the exact gradient with a central-difference Hessian."""
        h = 1e-5
        k = len(theta)
        hessian = np.empty((k, k))
        for j in range(k):
            e = np.zeros(k)
            e[j] = h
            hessian[:, j] = (gradient(theta + e) - gradient(theta - e)) / (2 * h)
        hessian = 0.5 * (hessian + hessian.T)
        try:
            step = -np.linalg.solve(hessian, gradient(theta))
        except np.linalg.LinAlgError:
            return None
        candidate = theta + step
        for j, (low, high) in enumerate(bounds):
            candidate[j] = np.clip(candidate[j], low if low is not None else -np.inf, high if high is not None else np.inf)
        return candidate if np.all(np.isfinite(candidate)) else None


def fit_glmm_laplace(design: DesignMatrices, group: str | None = None, tol: float = 1e-6, max_iter: int = 200,
                     fix_sigma: float | None = None) -> LaplaceFit:
    """Fit ``design`` reduced to a random intercept for ``group`` (its first block when omitted)."""
    if not design.blocks:
        raise MleError('the Laplace engine needs a random block')
    if group is not None or design.blocks[0].q != 1 or len(design.blocks) != 1:
        design = design.intercept_block(group)
    return LaplaceFitter(tol, max_iter, fix_sigma).fit(design)
