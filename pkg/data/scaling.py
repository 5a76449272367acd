"""
Put every predictor on a common scale of 0.5.

* covariates: ``(x - mean) / (2 * sd)`` with the n-1 sample SD, so the column has SD 0.5;
* unordered factors: sum contrasts scaled to +/-0.5 (nominal, whatever the balance);
* ordered factors: orthogonal polynomial contrasts on equally spaced level codes, each column
  rescaled so its SD over the observed rows is 0.5.
"""
import logging
from dataclasses import dataclass
from typing import Union

import numpy as np

from errors import ScalingError
from formula import ModelSpec
from .schema import ColumnKind, Dataset

_log = logging.getLogger(__name__)

SCALE = 0.5

_POLY_SUFFIXES = ('.L', '.Q', '.C')


@dataclass(frozen=True)
class CovariateScale:
    name: str
    center: float
    divisor: float

    @property
    def column_names(self) -> tuple[str, ...]:
        return (self.name,)

    def encode(self, values: np.ndarray) -> np.ndarray:
        return ((np.asarray(values, dtype=float) - self.center) / self.divisor)[:, None]

    def invert(self, scaled: np.ndarray) -> np.ndarray:
        return np.asarray(scaled, dtype=float) * self.divisor + self.center

    def to_dict(self) -> dict:
        return {'kind': 'covariate', 'center': self.center, 'divisor': self.divisor}


@dataclass(frozen=True, eq=False)
class FactorContrast:
    """``matrix[code]`` is the encoding of level ``levels[code]``; unobserved levels encode as zeros."""
    name: str
    method: str
    levels: tuple[str, ...]
    matrix: np.ndarray
    column_names: tuple[str, ...]

    def encode(self, codes: np.ndarray) -> np.ndarray:
        return self.matrix[np.asarray(codes, dtype=np.int64)]

    def to_dict(self) -> dict:
        return {'kind': self.method, 'levels': list(self.levels), 'columns': list(self.column_names),
                'matrix': self.matrix.tolist()}


Scaling = Union[CovariateScale, FactorContrast]


class ScalingRecord:
    """How each predictor column was transformed; serializable so back-transformation is reproducible."""

    def __init__(self, entries: dict[str, Scaling]):
        self._entries = dict(entries)

    def __getitem__(self, name: str) -> Scaling:
        return self._entries[name]

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def __iter__(self):
        return iter(self._entries.values())

    @property
    def names(self) -> list[str]:
        return list(self._entries)

    def encode(self, dataset: Dataset, name: str) -> np.ndarray:
        return self._entries[name].encode(dataset[name])

    def apply(self, dataset: Dataset) -> dict[str, np.ndarray]:
        return {name: self.encode(dataset, name) for name in self._entries}

    def invert(self, name: str, scaled: np.ndarray) -> np.ndarray:
        entry = self._entries[name]
        if not isinstance(entry, CovariateScale):
            raise TypeError(f"'{name}' is a factor; only covariates invert to data units")
        return entry.invert(scaled)

    def natural_divisor(self, variables: tuple[str, ...]) -> float | None:
        """
        Divisor turning a standardized coefficient into one per raw (centered) unit.
        Only defined for terms made purely of covariates; ``None`` otherwise.
        """
        divisor = 1.0
        for name in variables:
            entry = self._entries.get(name)
            if not isinstance(entry, CovariateScale):
                return None
            divisor *= entry.divisor
        return divisor

    def to_dict(self) -> dict:
        return {name: entry.to_dict() for name, entry in self._entries.items()}

    @classmethod
    def from_dict(cls, payload: dict) -> 'ScalingRecord':
        entries: dict[str, Scaling] = {}
        for name, spec in payload.items():
            if spec['kind'] == 'covariate':
                entries[name] = CovariateScale(name, float(spec['center']), float(spec['divisor']))
            else:
                entries[name] = FactorContrast(name, spec['kind'], tuple(spec['levels']),
                                               np.asarray(spec['matrix'], dtype=float), tuple(spec['columns']))
        return cls(entries)


def sum_contrasts(name: str, levels: tuple[str, ...], observed: list[int]) -> FactorContrast:
    """Scaled sum contrasts over the observed levels: the first observed level gets +0.5 on column 1."""
    k = len(observed)
    basis = np.zeros((k, k - 1))
    basis[:k - 1] = np.eye(k - 1) * SCALE
    basis[k - 1] = -SCALE
    matrix = np.zeros((len(levels), k - 1))
    matrix[observed] = basis
    columns = tuple(f'{name}[{levels[code]}]' for code in observed[:k - 1])
    return FactorContrast(name, 'sum', levels, matrix, columns)


def orthogonal_polynomials(k: int) -> np.ndarray:
    """Unit-norm orthogonal polynomial contrasts (linear, quadratic, ...) on codes 1..k, shape (k, k-1)."""
    x = np.arange(1, k + 1, dtype=float)
    x -= x.mean()
    vander = np.vander(x, k, increasing=True)
    q, r = np.linalg.qr(vander)
    z = q * np.diag(r)
    z /= np.sqrt((z ** 2).sum(axis=0))
    return z[:, 1:]


def polynomial_contrasts(name: str, levels: tuple[str, ...], observed: list[int], codes: np.ndarray) -> FactorContrast:
    k = len(observed)
    basis = orthogonal_polynomials(k)
    matrix = np.zeros((len(levels), k - 1))
    matrix[observed] = basis
    column_sd = matrix[codes].std(axis=0, ddof=1)
    if np.any(column_sd <= 0):
        raise ScalingError(f"ordered factor '{name}' has a constant polynomial column on the observed rows")
    matrix = matrix * (SCALE / column_sd)
    suffixes = [_POLY_SUFFIXES[i] if i < len(_POLY_SUFFIXES) else f'^{i + 1}' for i in range(k - 1)]
    return FactorContrast(name, 'poly', levels, matrix, tuple(f'{name}{s}' for s in suffixes))


def standardize(dataset: Dataset, spec: ModelSpec) -> ScalingRecord:
    """
    Build the ScalingRecord for every predictor ``spec`` uses.

    Raises:
        ScalingError: a covariate has zero variance, or a factor has a single observed level.
    """
    entries: dict[str, Scaling] = {}
    for name in spec.variables:
        values = dataset[name]
        kind = dataset.kind(name)
        if kind is ColumnKind.COVARIATE:
            sd = float(values.std(ddof=1)) if len(values) > 1 else 0.0
            if not sd > 0:
                raise ScalingError(f"covariate '{name}' has zero variance")
            entries[name] = CovariateScale(name, float(values.mean()), 2.0 * sd)
        else:
            levels = dataset.levels[name]
            observed = sorted(set(np.unique(values).tolist()))
            if len(observed) < 2:
                raise ScalingError(f"factor '{name}' has a single observed level")
            if len(observed) < len(levels):
                _log.warning(f"factor '{name}': levels {[levels[i] for i in range(len(levels)) if i not in observed]} "
                             f"never observed")
            if kind is ColumnKind.ORDERED:
                entries[name] = polynomial_contrasts(name, levels, observed, values)
            else:
                entries[name] = sum_contrasts(name, levels, observed)
    return ScalingRecord(entries)
