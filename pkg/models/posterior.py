"""
Hierarchical Bernoulli-logit posterior in unconstrained, non-centered coordinates.

Coordinates, in order: intercept, fixed effects, then per random block ``log sigma`` (q),
correlation angles (q(q-1)/2, ``np.tril_indices(q, -1)`` order) and raw effects ``z`` (groups x q,
row-major). Angles map to canonical partial correlations ``c = tanh(angle)`` and from there to the
Cholesky factor ``L`` of the correlation matrix; group effects are ``u_g = diag(sigma) L z_g``.

The log density is ``log prior + log likelihood + log |Jacobian|`` and its gradient is exact.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from data.design import DesignMatrices, INTERCEPT
from .glm import working_quantities
from .priors import (PriorConfig, cauchy_logpdf, cauchy_logpdf_grad, half_cauchy_logpdf,
                     lkj_cholesky_logdet, lkj_log_normalizer)

_LOG_2 = math.log(2.0)
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class BlockLayout:
    group: str
    q: int
    n_groups: int
    column_names: tuple[str, ...]
    levels: tuple[str, ...]
    log_sigma: slice
    angles: slice
    z: slice

    @property
    def n_angles(self) -> int:
        return self.q * (self.q - 1) // 2

    def pairs(self) -> list[tuple[int, int]]:
        rows, cols = np.tril_indices(self.q, -1)
        return list(zip(rows.tolist(), cols.tolist()))


@dataclass(frozen=True)
class ParameterLayout:
    fixed_names: tuple[str, ...]
    blocks: tuple[BlockLayout, ...]
    dim: int

    @property
    def p(self) -> int:
        return len(self.fixed_names)

    @property
    def beta(self) -> slice:
        return slice(1, 1 + self.p)

    @classmethod
    def from_design(cls, design: DesignMatrices) -> 'ParameterLayout':
        offset = 1 + design.p
        blocks = []
        for block in design.blocks:
            q, g = block.q, block.n_groups
            n_angles = q * (q - 1) // 2
            log_sigma = slice(offset, offset + q)
            angles = slice(log_sigma.stop, log_sigma.stop + n_angles)
            z = slice(angles.stop, angles.stop + q * g)
            blocks.append(BlockLayout(block.group, q, g, block.column_names, block.levels, log_sigma, angles, z))
            offset = z.stop
        return cls(tuple(design.column_names), tuple(blocks), offset)

    def names(self) -> list[str]:
        """Unconstrained coordinate names, in coordinate order."""
        names = [INTERCEPT, *self.fixed_names]
        for b in self.blocks:
            names += [f'log_sd[{b.group}:{c}]' for c in b.column_names]
            names += [f'cpc[{b.group}:{b.column_names[i]},{b.column_names[j]}]' for i, j in b.pairs()]
            names += [f'z[{b.group}:{level}:{c}]' for level in b.levels for c in b.column_names]
        return names

    def constrained_names(self) -> list[str]:
        names = [INTERCEPT, *self.fixed_names]
        for b in self.blocks:
            names += [f'sd[{b.group}:{c}]' for c in b.column_names]
            names += [f'cor[{b.group}:{b.column_names[i]},{b.column_names[j]}]' for i, j in b.pairs()]
            names += [f'u[{b.group}:{level}:{c}]' for level in b.levels for c in b.column_names]
        return names


@dataclass(frozen=True, eq=False)
class ParameterVector:
    values: np.ndarray
    layout: ParameterLayout

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.layout.dim,):
            raise ValueError(f'expected {self.layout.dim} coordinates, got shape {values.shape}')
        object.__setattr__(self, 'values', values)

    @classmethod
    def zeros(cls, layout: ParameterLayout) -> 'ParameterVector':
        return cls(np.zeros(layout.dim), layout)

    @property
    def intercept(self) -> float:
        return float(self.values[0])

    @property
    def beta(self) -> np.ndarray:
        return self.values[self.layout.beta]

    def log_sigma(self, k: int) -> np.ndarray:
        return self.values[self.layout.blocks[k].log_sigma]

    def angles(self, k: int) -> np.ndarray:
        return self.values[self.layout.blocks[k].angles]

    def z(self, k: int) -> np.ndarray:
        b = self.layout.blocks[k]
        return self.values[b.z].reshape(b.n_groups, b.q)


@dataclass(frozen=True, eq=False)
class BlockParams:
    sigma: np.ndarray
    L: np.ndarray
    z: np.ndarray

    @property
    def omega(self) -> np.ndarray:
        return self.L @ self.L.T

    @property
    def covariance(self) -> np.ndarray:
        return self.sigma[:, None] * self.omega * self.sigma[None, :]

    @property
    def u(self) -> np.ndarray:
        """Group effects, one row per group."""
        return (self.z @ self.L.T) * self.sigma


@dataclass(frozen=True, eq=False)
class ConstrainedParams:
    intercept: float
    beta: np.ndarray
    blocks: tuple[BlockParams, ...] = field(default=())


def _log1m_tanh2(angles: np.ndarray) -> np.ndarray:
    """log(1 - tanh(y)^2) = -2 log cosh(y), stable for large |y|."""
    a = np.abs(angles)
    return -2.0 * (a + np.log1p(np.exp(-2.0 * a)) - _LOG_2)


@dataclass(frozen=True, eq=False)
class _Cholesky:
    L: np.ndarray
    c: np.ndarray    # partial correlations, strictly lower triangle
    ell: np.ndarray  # log(1 - c^2), strictly lower triangle
    E: np.ndarray    # E[i, j] = prod_{m<j} sqrt(1 - c_im^2)


def _corr_cholesky(angles: np.ndarray, q: int) -> _Cholesky:
    rows, cols = np.tril_indices(q, -1)
    c = np.zeros((q, q))
    ell = np.zeros((q, q))
    c[rows, cols] = np.tanh(angles)
    ell[rows, cols] = _log1m_tanh2(angles)
    cum = np.zeros((q, q))
    cum[:, 1:] = np.cumsum(ell, axis=1)[:, :-1]
    E = np.exp(0.5 * cum)
    L = np.tril(c * E, -1) + np.diag(np.diag(E))
    return _Cholesky(L, c, ell, E)


def _angle_coefficients(q: int, eta: float | None) -> np.ndarray:
    """
    Coefficient of log(1 - c_im^2) in the log Jacobian (``eta`` None) or in log Jacobian + LKJ
    log density, at the ``np.tril_indices(q, -1)`` positions.
    """
    rows, cols = np.tril_indices(q, -1)
    coef = 1.0 + 0.5 * (rows - 1 - cols) + 0.5 * (q - rows - 1)
    if eta is not None:
        coef = coef + (eta - 1.0)
    return coef.astype(float)


def transform(params: ParameterVector) -> tuple[ConstrainedParams, float]:
    """Constrained values and ``log |d constrained / d unconstrained|``."""
    log_jacobian = 0.0
    blocks = []
    for k, b in enumerate(params.layout.blocks):
        s = params.log_sigma(k)
        chol = _corr_cholesky(params.angles(k), b.q)
        rows, cols = np.tril_indices(b.q, -1)
        log_jacobian += float(np.sum(s)) + float(np.sum(_angle_coefficients(b.q, None) * chol.ell[rows, cols]))
        blocks.append(BlockParams(np.exp(s), chol.L, params.z(k)))
    return ConstrainedParams(params.intercept, params.beta.copy(), tuple(blocks)), log_jacobian


def log_prior(constrained: ConstrainedParams, config: PriorConfig) -> float:
    """
    Cauchy(0, intercept_scale) on the intercept, independent Cauchy(0, beta_scale) on each fixed effect,
    HalfCauchy(0, sd_scale) on each SD, LKJ(eta) on each correlation matrix, N(0, 1) on each raw effect.
    """
    total = float(cauchy_logpdf(constrained.intercept, config.intercept_scale))
    total += float(np.sum(cauchy_logpdf(constrained.beta, config.beta_scale)))
    for block in constrained.blocks:
        q = len(block.sigma)
        total += float(np.sum(half_cauchy_logpdf(block.sigma, config.sd_scale)))
        if q > 1:
            total += (config.lkj_eta - 1.0) * lkj_cholesky_logdet(block.L) - lkj_log_normalizer(q, config.lkj_eta)
        total += float(-0.5 * np.sum(block.z ** 2) - block.z.size * _HALF_LOG_2PI)
    return total


def linear_predictor(constrained: ConstrainedParams, design: DesignMatrices) -> np.ndarray:
    eta = constrained.intercept + design.X @ constrained.beta
    for block, params in zip(design.blocks, constrained.blocks):
        eta = eta + np.sum(block.Z * params.u[block.index], axis=1)
    return eta


def log_likelihood(constrained: ConstrainedParams, design: DesignMatrices) -> float:
    eta = linear_predictor(constrained, design)
    return float(np.sum(design.y * eta - np.logaddexp(0.0, eta)))


def _group_sums(index: np.ndarray, values: np.ndarray, n_groups: int) -> np.ndarray:
    return np.column_stack([np.bincount(index, weights=values[:, j], minlength=n_groups)
                            for j in range(values.shape[1])])


class BayesianLogitModel:
    """The log posterior of one design under one prior configuration; evaluation is reentrant."""

    def __init__(self, design: DesignMatrices, config: PriorConfig | None = None):
        self.design = design
        self.config = config or PriorConfig()
        self.layout = ParameterLayout.from_design(design)
        self._log_normalizers = [lkj_log_normalizer(b.q, self.config.lkj_eta) for b in self.layout.blocks]

    @property
    def dim(self) -> int:
        return self.layout.dim

    def parameter_names(self) -> list[str]:
        return self.layout.names()

    def constrained_names(self) -> list[str]:
        return self.layout.constrained_names()

    def vector(self, theta: np.ndarray) -> ParameterVector:
        return ParameterVector(theta, self.layout)

    def log_density_and_grad(self, theta: np.ndarray) -> tuple[float, np.ndarray]:
        theta = np.asarray(theta, dtype=float)
        cfg, design, layout = self.config, self.design, self.layout
        grad = np.zeros(layout.dim)

        b0, beta = theta[0], theta[layout.beta]
        value = float(cauchy_logpdf(b0, cfg.intercept_scale)) + float(np.sum(cauchy_logpdf(beta, cfg.beta_scale)))
        grad[0] = cauchy_logpdf_grad(b0, cfg.intercept_scale)
        grad[layout.beta] = cauchy_logpdf_grad(beta, cfg.beta_scale)

        eta = b0 + design.X @ beta
        cache = []
        for bl, block, log_norm in zip(layout.blocks, design.blocks, self._log_normalizers):
            s = theta[bl.log_sigma]
            sigma = np.exp(s)
            zr = theta[bl.z].reshape(bl.n_groups, bl.q)
            chol = _corr_cholesky(theta[bl.angles], bl.q)
            M = zr @ chol.L.T
            eta = eta + np.sum(block.Z * (M * sigma)[block.index], axis=1)

            rows, cols = np.tril_indices(bl.q, -1)
            coef = _angle_coefficients(bl.q, cfg.lkj_eta)
            value += float(np.sum(half_cauchy_logpdf(sigma, cfg.sd_scale))) + float(np.sum(s))
            value += float(np.sum(coef * chol.ell[rows, cols])) - log_norm
            value += float(-0.5 * np.sum(zr ** 2) - zr.size * _HALF_LOG_2PI)

            grad[bl.log_sigma] = sigma * cauchy_logpdf_grad(sigma, cfg.sd_scale) + 1.0
            grad[bl.angles] = -2.0 * coef * chol.c[rows, cols]
            grad[bl.z] = -zr.ravel()
            cache.append((sigma, zr, chol, M))

        value += float(np.sum(design.y * eta - np.logaddexp(0.0, eta)))
        r, _ = working_quantities(eta, design.y)
        grad[0] += np.sum(r)
        grad[layout.beta] += design.X.T @ r

        for bl, block, (sigma, zr, chol, M) in zip(layout.blocks, design.blocks, cache):
            GU = _group_sums(block.index, r[:, None] * block.Z, bl.n_groups)
            dM = GU * sigma
            grad[bl.log_sigma] += sigma * np.sum(GU * M, axis=0)
            grad[bl.z] += (dM @ chol.L).ravel()
            if bl.q > 1:
                grad[bl.angles] += self._angle_backprop(np.tril(dM.T @ zr), chol)
        return value, grad

    @staticmethod
    def _angle_backprop(dL: np.ndarray, chol: _Cholesky) -> np.ndarray:
        """
        Pull ``d value / d L`` back to the angles. For j < i, ``L_ij = c_ij E_ij`` and ``L_ii = E_ii``,
        with ``E_ij`` depending on ``c_im`` for every m < j.
        """
        q = dL.shape[0]
        rows, cols = np.tril_indices(q, -1)
        P = dL * chol.L
        tail = np.cumsum(P[:, ::-1], axis=1)[:, ::-1]  # tail[i, m] = sum_{j >= m} P[i, j]
        direct = dL[rows, cols] * chol.E[rows, cols] * np.exp(chol.ell[rows, cols])
        return direct - chol.c[rows, cols] * tail[rows, cols + 1]

    def constrain(self, theta: np.ndarray) -> np.ndarray:
        """Constrained values in ``constrained_names`` order."""
        constrained, _ = transform(self.vector(theta))
        parts = [np.atleast_1d(constrained.intercept), constrained.beta]
        for bl, block in zip(self.layout.blocks, constrained.blocks):
            rows, cols = np.tril_indices(bl.q, -1)
            parts += [block.sigma, block.omega[rows, cols], block.u.ravel()]
        return np.concatenate(parts)

    def constrain_draws(self, draws: np.ndarray) -> np.ndarray:
        draws = np.atleast_2d(draws)
        return np.vstack([self.constrain(theta) for theta in draws]) if len(draws) else \
            np.zeros((0, len(self.constrained_names())))


def log_posterior_and_grad(params: ParameterVector, design: DesignMatrices,
                           config: PriorConfig | None = None) -> tuple[float, np.ndarray]:
    return BayesianLogitModel(design, config).log_density_and_grad(params.values)
