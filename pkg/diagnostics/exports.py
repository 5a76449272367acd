"""CSV exports of a NUTS run: per-chain draws, thinned traces, density grids and posterior predictive tables."""
import io
import logging
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.stats import gaussian_kde

from sampler.runner import STAT_COLUMNS
from utils.io_utils import write_text
from .ppc import PpcResult

_log = logging.getLogger(__name__)

TRACE_POINTS = 500
DENSITY_POINTS = 200


def write_csv(path: str | Path, frame: pd.DataFrame) -> Path:
    """Deterministic text: full float precision, ``\\n`` line endings, no index."""
    buffer = io.StringIO()
    frame.to_csv(buffer, index=False, float_format='%.17g', lineterminator='\n')
    return write_text(path, buffer.getvalue())


def _summary_parameters(names: tuple[str, ...]) -> list[int]:
    return [j for j, name in enumerate(names) if not name.startswith('u[')]


def chain_frames(draws) -> list[pd.DataFrame]:
    """One frame per chain: constrained parameters in declaration order, then the sampler statistics."""
    names = list(draws.constrained_names)
    frames = []
    for k in range(draws.n_chains):
        frame = pd.DataFrame(draws.constrained[k], columns=names)
        for key in STAT_COLUMNS:
            frame[f'{key}__'] = draws.stats[key][k]
        frames.append(frame)
    return frames


def trace_frame(draws, max_points: int = TRACE_POINTS) -> pd.DataFrame:
    keep = _summary_parameters(draws.constrained_names)
    thin = max(1, int(np.ceil(draws.n_draws / max_points)))
    iterations = np.arange(0, draws.n_draws, thin)
    parts = []
    for k in range(draws.n_chains):
        part = pd.DataFrame(draws.constrained[k][iterations][:, keep],
                            columns=[draws.constrained_names[j] for j in keep])
        part.insert(0, 'iteration', iterations)
        part.insert(0, 'chain', k)
        parts.append(part)
    return pd.concat(parts, ignore_index=True)


def density_frame(draws, points: int = DENSITY_POINTS) -> pd.DataFrame:
    """Gaussian KDE of each non-``u`` parameter over its pooled draws; constant parameters are skipped."""
    rows = []
    pooled = draws.constrained.reshape(-1, draws.constrained.shape[2])
    for j in _summary_parameters(draws.constrained_names):
        values = pooled[:, j]
        low, high = values.min(), values.max()
        if not high > low:
            continue
        try:
            kde = gaussian_kde(values)
        except np.linalg.LinAlgError:
            _log.debug(f'no density for {draws.constrained_names[j]}')
            continue
        pad = 0.05 * (high - low)
        grid = np.linspace(low - pad, high + pad, points)
        rows.append(pd.DataFrame({'parameter': draws.constrained_names[j], 'x': grid, 'density': kde(grid)}))
    if not rows:
        return pd.DataFrame(columns=['parameter', 'x', 'density'])
    return pd.concat(rows, ignore_index=True)


def ppc_frames(result: PpcResult) -> dict[str, pd.DataFrame]:
    low, high = result.interval
    return {
        'overall.csv': pd.DataFrame({'draw': result.draw_index, 'replicated': result.replicated}),
        'observed.csv': pd.DataFrame({'observed': [result.observed], 'low': [low], 'high': [high],
                                      'inside': [result.observed_inside]}),
        'groups.csv': pd.DataFrame([c.to_dict() for c in result.groups],
                                   columns=['group', 'level', 'count', 'observed', 'low', 'high', 'covered']),
        'fitted.csv': pd.DataFrame({'row': np.arange(len(result.fitted)), 'p': result.fitted}),
    }


def export_run(out_dir: str | Path, draws, ppc: PpcResult | None = None) -> list[Path]:
    """Write ``fit/chain-*.csv``, ``plots/*.csv`` and ``ppc/*.csv`` under ``out_dir``."""
    out_dir = Path(out_dir)
    written = [write_csv(out_dir / 'fit' / f'chain-{k}.csv', frame) for k, frame in enumerate(chain_frames(draws))]
    written.append(write_csv(out_dir / 'plots' / 'trace.csv', trace_frame(draws)))
    written.append(write_csv(out_dir / 'plots' / 'density.csv', density_frame(draws)))
    if ppc is not None:
        written += [write_csv(out_dir / 'ppc' / name, frame) for name, frame in ppc_frames(ppc).items()]
    _log.info(f'Exported {len(written)} CSV files to {out_dir}')
    return written
