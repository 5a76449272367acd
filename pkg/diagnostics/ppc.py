import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from data.design import DesignMatrices
from errors import DiagnosticsError

_log = logging.getLogger(__name__)

INTERVAL = (0.025, 0.975)


@dataclass(frozen=True)
class GroupCheck:
    group: str
    level: str
    count: int
    observed: float
    low: float
    high: float

    @property
    def covered(self) -> bool:
        return self.low <= self.observed <= self.high

    def to_dict(self) -> dict:
        return {'group': self.group, 'level': self.level, 'count': self.count, 'observed': self.observed,
                'low': self.low, 'high': self.high, 'covered': self.covered}


@dataclass(frozen=True, eq=False)
class PpcResult:
    observed: float
    replicated: np.ndarray
    draw_index: np.ndarray
    groups: tuple[GroupCheck, ...]
    fitted: np.ndarray

    @property
    def interval(self) -> tuple[float, float]:
        low, high = np.quantile(self.replicated, INTERVAL)
        return float(low), float(high)

    @property
    def observed_inside(self) -> bool:
        low, high = self.interval
        return low <= self.observed <= high

    def coverage(self, group: str) -> float:
        checks = [c for c in self.groups if c.group == group]
        return float(np.mean([c.covered for c in checks])) if checks else float('nan')

    def to_dict(self) -> dict:
        low, high = self.interval
        grouping = sorted({c.group for c in self.groups})
        return {
            'observed': self.observed,
            'replicated_mean': float(self.replicated.mean()),
            'interval': [low, high],
            'observed_inside': self.observed_inside,
            'replications': len(self.replicated),
            'group_coverage': {g: self.coverage(g) for g in grouping},
        }


def _selected_rows(n_total: int, n_rep: int) -> np.ndarray:
    if not 1 <= n_rep <= n_total:
        raise DiagnosticsError(f'n_rep must lie in [1, {n_total}] (available draws), got {n_rep}')
    return np.unique(np.linspace(0, n_total - 1, n_rep).round().astype(np.int64))


def linear_predictors(values: np.ndarray, design: DesignMatrices) -> np.ndarray:
    """
    ``eta`` for each row of ``values``, a (draws, parameters) array in constrained order
    (intercept, fixed effects, then per block sd, cor, u).
    """
    values = np.atleast_2d(values)
    p = design.p
    eta = values[:, [0]] + values[:, 1:1 + p] @ design.X.T
    offset = 1 + p
    for block in design.blocks:
        q, g = block.q, block.n_groups
        offset += q + q * (q - 1) // 2
        u = values[:, offset:offset + g * q].reshape(-1, g, q)
        offset += g * q
        eta = eta + np.einsum('nq,dnq->dn', block.Z, u[:, block.index, :])
    return eta


def posterior_predictive(draws, design: DesignMatrices, rng: np.random.Generator, n_rep: int = 500) -> PpcResult:
    """
    Replicate the response under ``n_rep`` evenly spaced posterior draws (chains concatenated) and
    compare overall and per-group success proportions with the observed ones.

    Raises:
        DiagnosticsError: ``n_rep`` exceeds the number of draws.
    """
    values = draws.constrained.reshape(-1, draws.constrained.shape[2])
    rows = _selected_rows(len(values), n_rep)
    y = design.y

    replicated = np.empty(len(rows))
    group_reps = [np.empty((len(rows), b.n_groups)) for b in design.blocks]
    group_counts = [np.bincount(b.index, minlength=b.n_groups) for b in design.blocks]
    for i, row in enumerate(rows):
        p = expit(linear_predictors(values[row], design)[0])
        y_rep = (rng.uniform(size=design.n) < p).astype(float)
        replicated[i] = y_rep.mean()
        for k, block in enumerate(design.blocks):
            with np.errstate(invalid='ignore', divide='ignore'):
                group_reps[k][i] = np.bincount(block.index, weights=y_rep, minlength=block.n_groups) / group_counts[k]

    checks = []
    for k, block in enumerate(design.blocks):
        with np.errstate(invalid='ignore', divide='ignore'):
            observed = np.bincount(block.index, weights=y, minlength=block.n_groups) / group_counts[k]
        low, high = np.quantile(group_reps[k], INTERVAL, axis=0)
        for g, level in enumerate(block.levels):
            checks.append(GroupCheck(block.group, level, int(group_counts[k][g]), float(observed[g]),
                                     float(low[g]), float(high[g])))

    # eta is linear in the intercept, fixed effects and u, so its mean is eta at the posterior means
    fitted = expit(linear_predictors(values.mean(axis=0), design)[0])
    result = PpcResult(float(y.mean()), replicated, rows, tuple(checks), fitted)
    low, high = result.interval
    _log.info(f'Posterior predictive: observed {result.observed:.3f}, replicated 95% [{low:.3f}, {high:.3f}]')
    return result
