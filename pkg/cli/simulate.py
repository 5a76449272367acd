"""
Synthetic datasets drawn from the hierarchical logistic model, with optional forced responses.

Coefficients are on the standardized design scale: the simulator standardizes and builds the design
with the same routines the fitters use, so the truth file is directly comparable to fit summaries.
Factor levels are assigned in a balanced, fully crossed pattern; covariates come from the seeded stream.
"""
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
from scipy.special import expit

from data import Column, ColumnKind, ColumnSchema, Dataset, build_design, standardize
from diagnostics.exports import write_csv
from errors import ScenarioError, SepfitError
from formula import parse_formula, validate_spec
from utils.io_utils import read_json, write_json

_log = logging.getLogger(__name__)

DISTRIBUTIONS = ('normal', 'uniform', 'index')


@dataclass(frozen=True)
class Predictor:
    name: str
    kind: str
    levels: tuple[str, ...] = ()
    distribution: str = 'normal'
    params: tuple[float, float] = (0.0, 1.0)


@dataclass(frozen=True)
class Injection:
    """Rows where every ``where`` column takes one of the listed levels get response ``y``."""
    where: dict[str, tuple[str, ...]]
    y: int

    def disjoint(self, other: 'Injection') -> bool:
        shared = set(self.where) & set(other.where)
        return any(not set(self.where[k]) & set(other.where[k]) for k in shared)

    def to_dict(self) -> dict:
        return {'where': {k: list(v) for k, v in self.where.items()}, 'y': self.y}


@dataclass(frozen=True)
class SimScenario:
    formula: str
    n: int
    groups: dict[str, int]
    predictors: tuple[Predictor, ...] = ()
    intercept: float = 0.0
    beta: dict[str, float] = field(default_factory=dict)
    sigma: dict[str, tuple[float, ...]] = field(default_factory=dict)
    correlation: dict[str, np.ndarray] = field(default_factory=dict)
    injections: tuple[Injection, ...] = ()

    def __post_init__(self):
        if self.n < 1:
            raise ScenarioError(f'n must be at least 1, got {self.n}')
        for group, count in self.groups.items():
            if count < 1:
                raise ScenarioError(f"group '{group}' needs at least one level, got {count}")
        for predictor in self.predictors:
            if predictor.kind in ('factor', 'ordered') and len(predictor.levels) < 2:
                raise ScenarioError(f"factor '{predictor.name}' needs at least two levels")
            if predictor.kind == 'covariate' and predictor.distribution not in DISTRIBUTIONS:
                raise ScenarioError(f"covariate '{predictor.name}': distribution must be one of {DISTRIBUTIONS}")
            if predictor.kind not in ('covariate', 'factor', 'ordered'):
                raise ScenarioError(f"predictor '{predictor.name}': unknown kind '{predictor.kind}'")
        for group, sd in self.sigma.items():
            if any(not (math.isfinite(s) and s >= 0) for s in sd):
                raise ScenarioError(f"group '{group}': standard deviations must be finite and non-negative")
        for group, omega in self.correlation.items():
            _check_correlation(group, omega)
        for i, first in enumerate(self.injections):
            if first.y not in (0, 1):
                raise ScenarioError(f'injection {i}: forced response must be 0 or 1, got {first.y}')
            for j, second in enumerate(self.injections[i + 1:], start=i + 1):
                if not first.disjoint(second):
                    raise ScenarioError(f'injections {i} and {j} can match the same rows')

    @classmethod
    def from_dict(cls, payload: dict[str, Any]) -> 'SimScenario':
        try:
            predictors = tuple(
                Predictor(name, spec['kind'], tuple(str(level) for level in spec.get('levels', ())),
                          spec.get('distribution', 'normal'), _distribution_params(spec))
                for name, spec in payload.get('predictors', {}).items())
            injections = tuple(
                Injection({k: tuple(str(x) for x in (v if isinstance(v, list) else [v])) for k, v in item['where'].items()},
                          int(item['y']))
                for item in payload.get('injections', ()))
            return cls(
                formula=payload['formula'],
                n=int(payload['n']),
                groups={k: int(v) for k, v in payload.get('groups', {}).items()},
                predictors=predictors,
                intercept=float(payload.get('intercept', 0.0)),
                beta={k: float(v) for k, v in payload.get('beta', {}).items()},
                sigma={k: tuple(float(s) for s in np.atleast_1d(v)) for k, v in payload.get('sigma', {}).items()},
                correlation={k: np.asarray(v, dtype=float) for k, v in payload.get('correlation', {}).items()},
                injections=injections,
            )
        except SepfitError:
            raise
        except (KeyError, TypeError, ValueError) as e:
            raise ScenarioError(f'invalid scenario: {type(e).__name__}: {e}') from None

    @classmethod
    def from_json(cls, path: str | Path) -> 'SimScenario':
        path = Path(path)
        if not path.is_file():
            raise ScenarioError(f'scenario file not found: {path}')
        try:
            return cls.from_dict(read_json(path))
        except ValueError as e:
            raise ScenarioError(f'scenario file {path} is not valid JSON: {e}') from None

    def to_dict(self) -> dict:
        return {
            'formula': self.formula,
            'n': self.n,
            'groups': dict(self.groups),
            'predictors': {p.name: {'kind': p.kind, 'levels': list(p.levels), 'distribution': p.distribution,
                                    'params': list(p.params)} for p in self.predictors},
            'intercept': self.intercept,
            'beta': dict(self.beta),
            'sigma': {k: list(v) for k, v in self.sigma.items()},
            'correlation': {k: v.tolist() for k, v in self.correlation.items()},
            'injections': [i.to_dict() for i in self.injections],
        }


def _distribution_params(spec: dict) -> tuple[float, float]:
    distribution = spec.get('distribution', 'normal')
    if distribution == 'uniform':
        return float(spec.get('low', 0.0)), float(spec.get('high', 1.0))
    return float(spec.get('mean', 0.0)), float(spec.get('sd', 1.0))


def _check_correlation(group: str, omega: np.ndarray):
    if omega.ndim != 2 or omega.shape[0] != omega.shape[1]:
        raise ScenarioError(f"group '{group}': correlation must be a square matrix")
    if not np.allclose(omega, omega.T) or not np.allclose(np.diag(omega), 1.0):
        raise ScenarioError(f"group '{group}': correlation must be symmetric with unit diagonal")
    try:
        np.linalg.cholesky(omega)
    except np.linalg.LinAlgError:
        raise ScenarioError(f"group '{group}': correlation matrix is not positive definite") from None


def _group_levels(group: str, count: int) -> tuple[str, ...]:
    width = len(str(count))
    return tuple(f'{group}{i + 1:0{width}d}' for i in range(count))


@dataclass(frozen=True, eq=False)
class SimulatedData:
    frame: pd.DataFrame
    schema: ColumnSchema
    truth: dict


def draw_dataset(scenario: SimScenario, seed: int) -> SimulatedData:
    """
    Raises:
        ScenarioError: the formula references columns the scenario does not define, a coefficient names
            no design column, or a block's SD/correlation sizes do not match its columns.
    """
    spec = parse_formula(scenario.formula)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    n = scenario.n

    columns: list[Column] = [Column(spec.response, ColumnKind.RESPONSE)]
    codes: dict[str, np.ndarray] = {}
    levels: dict[str, tuple[str, ...]] = {}
    stride = 1
    for group in spec.grouping_factors:
        if group not in scenario.groups:
            raise ScenarioError(f"no group count for grouping factor '{group}'")
        levels[group] = _group_levels(group, scenario.groups[group])
        codes[group] = (np.arange(n) // stride) % len(levels[group])
        stride *= len(levels[group])
        columns.append(Column(group, ColumnKind.FACTOR, levels[group]))
    index_stride = stride
    for predictor in scenario.predictors:
        if predictor.kind == 'covariate':
            columns.append(Column(predictor.name, ColumnKind.COVARIATE))
            continue
        levels[predictor.name] = predictor.levels
        codes[predictor.name] = (np.arange(n) // stride) % len(predictor.levels)
        stride *= len(predictor.levels)
        kind = ColumnKind.ORDERED if predictor.kind == 'ordered' else ColumnKind.FACTOR
        columns.append(Column(predictor.name, kind, predictor.levels))

    values: dict[str, np.ndarray] = dict(codes)
    for predictor in scenario.predictors:
        if predictor.kind != 'covariate':
            continue
        a, b = predictor.params
        if predictor.distribution == 'normal':
            values[predictor.name] = rng.normal(a, b, n)
        elif predictor.distribution == 'uniform':
            values[predictor.name] = rng.uniform(a, b, n)
        else:
            # position within the crossed cycle, like a trial counter
            values[predictor.name] = (np.arange(n) // index_stride + 1).astype(float)

    schema = ColumnSchema(columns)
    try:
        validate_spec(spec, schema)
    except SepfitError as e:
        raise ScenarioError(f'scenario does not match its formula: {e}') from None
    values[spec.response] = np.zeros(n, dtype=np.int8)
    dataset = Dataset(values, levels, schema)
    design = build_design(dataset, spec, standardize(dataset, spec))

    unknown = sorted(set(scenario.beta) - set(design.column_names))
    if unknown:
        raise ScenarioError(f'coefficients for unknown design columns: {unknown}; '
                            f'columns are {list(design.column_names)}')
    beta = np.array([scenario.beta.get(name, 0.0) for name in design.column_names])
    eta = scenario.intercept + design.X @ beta

    effects = {}
    for block in design.blocks:
        sd = np.asarray(scenario.sigma.get(block.group, np.zeros(block.q)), dtype=float)
        omega = scenario.correlation.get(block.group, np.eye(block.q))
        if sd.shape != (block.q,) or omega.shape != (block.q, block.q):
            raise ScenarioError(f"block '{block.group}' has {block.q} columns {list(block.column_names)}; "
                                f'sigma has {sd.size} entries and correlation is {omega.shape}')
        u = rng.standard_normal((block.n_groups, block.q)) @ (sd[:, None] * np.linalg.cholesky(omega)).T
        eta = eta + np.sum(block.Z * u[block.index], axis=1)
        effects[block.group] = {level: dict(zip(block.column_names, row)) for level, row in zip(block.levels, u.tolist())}

    y = (rng.uniform(size=n) < expit(eta)).astype(np.int8)
    forced = np.zeros(n, dtype=bool)
    for i, injection in enumerate(scenario.injections):
        mask = np.ones(n, dtype=bool)
        for name, allowed in injection.where.items():
            if name not in levels:
                raise ScenarioError(f"injection {i}: '{name}' is not a factor or grouping column")
            unknown_levels = set(allowed) - set(levels[name])
            if unknown_levels:
                raise ScenarioError(f"injection {i}: unknown levels {sorted(unknown_levels)} of '{name}'")
            mask &= np.isin(codes[name], [levels[name].index(level) for level in allowed])
        y[mask] = injection.y
        forced |= mask
        _log.info(f'Injection {i}: forced y={injection.y} on {int(mask.sum())} rows')

    frame = pd.DataFrame({spec.response: y})
    for column in columns[1:]:
        name = column.name
        frame[name] = np.asarray(levels[name], dtype=object)[codes[name]] if column.is_factor else values[name]

    truth = {
        'seed': seed,
        'scenario': scenario.to_dict(),
        'formula': spec.pretty(),
        'intercept': scenario.intercept,
        'beta': dict(zip(design.column_names, beta.tolist())),
        'sigma': {k: list(v) for k, v in scenario.sigma.items()},
        'correlation': {k: v.tolist() for k, v in scenario.correlation.items()},
        'random_effects': effects,
        'scaling': design.scaling.to_dict(),
        'forced_rows': int(forced.sum()),
        'success_proportion': float(y.mean()),
    }
    return SimulatedData(frame, schema, truth)


def simulate_dataset(scenario: SimScenario, seed: int, out_dir: str | Path) -> list[Path]:
    """Write ``data.csv``, ``schema.json`` and ``truth.json`` into ``out_dir``."""
    out_dir = Path(out_dir)
    simulated = draw_dataset(scenario, seed)
    written = [
        write_csv(out_dir / 'data.csv', simulated.frame),
        write_json(out_dir / 'schema.json', simulated.schema.to_dict()),
        write_json(out_dir / 'truth.json', simulated.truth),
    ]
    _log.info(f'Simulated {scenario.n} rows (success proportion {simulated.truth["success_proportion"]:.3f}) '
              f'into {out_dir}')
    return written
