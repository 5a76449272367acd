import logging
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from data.scaling import ScalingRecord
from errors import DiagnosticsError
from utils.io_utils import map_ordered
from .convergence import effective_sample_size, split_rhat

_log = logging.getLogger(__name__)

RHAT_THRESHOLD = 1.1
NONZERO_SD_FLOOR = 0.05
QUANTILES = (0.025, 0.5, 0.975)


@dataclass(frozen=True)
class ParameterSummary:
    name: str
    mean: float
    sd: float
    median: float
    q2_5: float
    q97_5: float
    ess: float
    rhat: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class VarianceComponent:
    name: str
    q2_5: float

    @property
    def nonzero(self) -> bool:
        return self.q2_5 > NONZERO_SD_FLOOR

    def to_dict(self) -> dict:
        return {'name': self.name, 'q2_5': self.q2_5, 'nonzero': self.nonzero}


@dataclass
class FitSummary:
    parameters: list[ParameterSummary]
    divergent: int = 0
    treedepth_saturation: int = 0
    n_chains: int = 0
    n_draws: int = 0
    natural: list[ParameterSummary] = field(default_factory=list)
    variance_components: list[VarianceComponent] = field(default_factory=list)
    sampler: dict = field(default_factory=dict)
    priors: dict = field(default_factory=dict)

    def __getitem__(self, name: str) -> ParameterSummary:
        for row in self.parameters:
            if row.name == name:
                return row
        raise KeyError(name)

    @property
    def rhat_failures(self) -> list[str]:
        return [row.name for row in self.parameters if not math.isnan(row.rhat) and not row.rhat < RHAT_THRESHOLD]

    @property
    def passed(self) -> bool:
        return self.divergent == 0 and not self.rhat_failures

    @property
    def verdict(self) -> str:
        return 'pass' if self.passed else 'fail'

    def failures(self) -> list[str]:
        reasons = []
        if self.divergent:
            reasons.append(f'{self.divergent} divergent transitions after warmup')
        for name in self.rhat_failures:
            reasons.append(f'R-hat of {name} is {self[name].rhat:.3f} (>= {RHAT_THRESHOLD})')
        return reasons

    def advice(self) -> list[str]:
        notes = []
        if self.divergent:
            notes.append('divergent transitions: increase adapt_delta (e.g. 0.95 or 0.99) and refit')
        if self.treedepth_saturation:
            notes.append(f'{self.treedepth_saturation} transitions hit the maximum tree depth; '
                         f'consider raising --max-treedepth')
        zero = [vc.name for vc in self.variance_components if not vc.nonzero]
        if zero:
            notes.append(f'posterior mass near zero for {", ".join(zero)}')
        return notes

    def to_dict(self) -> dict:
        return {
            'verdict': self.verdict,
            'failures': self.failures(),
            'advice': self.advice(),
            'divergent': self.divergent,
            'treedepth_saturation': self.treedepth_saturation,
            'chains': self.n_chains,
            'draws_per_chain': self.n_draws,
            'parameters': [row.to_dict() for row in self.parameters],
            'natural_scale': [row.to_dict() for row in self.natural],
            'variance_components': [vc.to_dict() for vc in self.variance_components],
            'sampler': self.sampler,
            'priors': self.priors,
        }

    def render(self, include_random_effects: bool = False) -> str:
        header = ('parameter', 'mean', 'sd', 'median', '2.5%', '97.5%', 'ess', 'rhat')
        rows = [header]
        for row in self.parameters:
            if not include_random_effects and row.name.startswith('u['):
                continue
            rows.append(_format_row(row))
        lines = _align(rows)
        if self.natural:
            lines += ['', 'per raw unit (covariate terms):'] + _align([header] + [_format_row(r) for r in self.natural])
        lines.append('')
        lines.append(f'verdict: {self.verdict} ({self.divergent} divergent, '
                     f'{len(self.rhat_failures)} R-hat >= {RHAT_THRESHOLD})')
        lines += [f'note: {note}' for note in self.advice()]
        return '\n'.join(lines)


def _format_row(row: ParameterSummary) -> tuple[str, ...]:
    def num(x: float, fmt: str = '.3f') -> str:
        return 'nan' if math.isnan(x) else format(x, fmt)
    return (row.name, num(row.mean), num(row.sd), num(row.median), num(row.q2_5), num(row.q97_5),
            num(row.ess, '.0f'), num(row.rhat))


def _align(rows: list[tuple[str, ...]]) -> list[str]:
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    return ['  '.join(v.rjust(w) if i else v.ljust(w) for i, (v, w) in enumerate(zip(r, widths))) for r in rows]


def summarize_values(values: np.ndarray, names: list[str] | tuple[str, ...], *,
                     with_convergence: bool = True, parallel: bool = True) -> list[ParameterSummary]:
    """
    Per-parameter summaries of ``values`` shaped (chains, draws, parameters). Quantiles interpolate
    linearly between order statistics.
    """
    values = np.asarray(values, dtype=float)
    if values.ndim != 3 or values.shape[0] * values.shape[1] == 0:
        raise DiagnosticsError(f'need a non-empty (chains, draws, parameters) array, got shape {values.shape}')
    if values.shape[2] != len(names):
        raise DiagnosticsError(f'{values.shape[2]} parameters but {len(names)} names')
    flat = values.reshape(-1, values.shape[2])
    mean = flat.mean(axis=0)
    sd = flat.std(axis=0, ddof=1) if len(flat) > 1 else np.zeros(flat.shape[1])
    low, median, high = np.quantile(flat, QUANTILES, axis=0)
    if with_convergence:
        rhat = split_rhat(values, names)
        chunks = np.array_split(np.arange(values.shape[2]), max(1, min(values.shape[2], 8)))
        ess = np.concatenate(map_ordered(lambda cols: effective_sample_size(values[:, :, cols]), chunks,
                                         parallel=parallel))
    else:
        rhat = ess = np.full(values.shape[2], np.nan)
    return [ParameterSummary(name, float(mean[j]), float(sd[j]), float(median[j]), float(low[j]), float(high[j]),
                             float(ess[j]), float(rhat[j]))
            for j, name in enumerate(names)]


def natural_scale(values: np.ndarray, names: list[str], column_terms: dict[str, tuple[str, ...]],
                  scaling: ScalingRecord) -> list[ParameterSummary]:
    """Fixed effects of covariate-only terms, per raw unit of the covariates (standardized / divisor)."""
    columns, labels = [], []
    for j, name in enumerate(names):
        variables = column_terms.get(name)
        if variables is None:
            continue
        divisor = scaling.natural_divisor(variables)
        if divisor is None:
            continue
        columns.append(values[:, :, j] / divisor)
        labels.append(name)
    if not columns:
        return []
    return summarize_values(np.stack(columns, axis=2), labels, with_convergence=values.shape[0] >= 2)


def summarize(draws, scaling: ScalingRecord | None = None,
              column_terms: dict[str, tuple[str, ...]] | None = None, priors: dict | None = None) -> FitSummary:
    """
    Summaries of a ``PosteriorDraws`` on the constrained scale plus the run-level verdict:
    pass iff no post-warmup divergences and every R-hat below 1.1 (constant parameters excluded).
    """
    names = list(draws.constrained_names)
    values = draws.constrained
    rows = summarize_values(values, names)
    summary = FitSummary(
        parameters=rows,
        divergent=draws.divergent_count,
        treedepth_saturation=draws.treedepth_saturation,
        n_chains=draws.n_chains,
        n_draws=draws.n_draws,
        variance_components=[VarianceComponent(r.name, r.q2_5) for r in rows if r.name.startswith('sd[')],
        sampler={
            'step_size': draws.step_sizes.tolist(),
            'inv_metric': draws.inv_masses.tolist(),
            'mean_accept_stat': float(draws.stats['accept_stat'].mean()),
        },
        priors=priors or {},
    )
    if scaling is not None and column_terms:
        summary.natural = natural_scale(values, names, column_terms, scaling)
    if summary.passed:
        _log.info('Convergence verdict: pass')
    else:
        _log.warning(f'Convergence verdict: fail ({"; ".join(summary.failures())})')
    return summary
