"""
Cell scans for separation.

A unit (one factor, one covariate, one interaction, one group of a random block) is a set of cells,
each with a count and a success count. The unit is ``Separation`` when every non-empty cell is pure
(proportion exactly 0 or 1), ``QuasiSeparation`` when some are, ``Overlap`` when none are. A unit whose cells
cover the whole response and are all pure the same way is ``ConstantResponse``: nothing separates the outcomes.
"""
import itertools
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from data.schema import ColumnKind, Dataset
from formula import ModelSpec, RandomBlock, Term
from utils.io_utils import map_ordered

_log = logging.getLogger(__name__)


class Classification(Enum):
    OVERLAP = 'Overlap'
    QUASI_SEPARATION = 'QuasiSeparation'
    SEPARATION = 'Separation'
    CONSTANT_RESPONSE = 'ConstantResponse'

    @property
    def severity(self) -> int:
        return _SEVERITY[self]

    @classmethod
    def worst(cls, values: Iterable['Classification']) -> 'Classification':
        return max(values, key=lambda c: c.severity, default=cls.OVERLAP)


_SEVERITY = {Classification.OVERLAP: 0, Classification.QUASI_SEPARATION: 1, Classification.SEPARATION: 2,
             Classification.CONSTANT_RESPONSE: 3}


@dataclass(frozen=True)
class Cell:
    label: str
    count: int
    successes: int

    @property
    def empty(self) -> bool:
        return self.count == 0

    @property
    def proportion(self) -> float:
        return self.successes / self.count if self.count else float('nan')

    @property
    def pure(self) -> bool:
        return self.count > 0 and self.successes in (0, self.count)

    def to_dict(self) -> dict:
        return {'cell': self.label, 'count': self.count, 'successes': self.successes, 'proportion': self.proportion,
                'pure': self.pure}


def classify_cells(cells: Sequence[Cell]) -> Classification:
    """Empty cells are reported but take no part in the classification."""
    observed = [cell for cell in cells if not cell.empty]
    pure = sum(cell.pure for cell in observed)
    if observed and pure == len(observed):
        return Classification.SEPARATION
    if pure:
        return Classification.QUASI_SEPARATION
    return Classification.OVERLAP


def classify_partition(cells: Sequence[Cell]) -> Classification:
    """``classify_cells`` for cells that partition every row of the response."""
    observed = [cell for cell in cells if not cell.empty]
    if observed and (all(cell.successes == 0 for cell in observed)
                     or all(cell.successes == cell.count for cell in observed)):
        return Classification.CONSTANT_RESPONSE
    return classify_cells(cells)


@dataclass(frozen=True)
class UnitFinding:
    """
    One scanned unit. ``source`` is the predictor, interaction or grouping factor the cells come from;
    ``children`` holds the per-group findings of a grouped scan.
    """
    source: str
    kind: str
    unit: str
    cells: tuple[Cell, ...]
    classification: Classification
    threshold: float | None = None
    children: tuple['UnitFinding', ...] = ()

    @property
    def pure_cells(self) -> list[Cell]:
        return [cell for cell in self.cells if cell.pure]

    def to_dict(self) -> dict:
        payload = {
            'source': self.source,
            'kind': self.kind,
            'unit': self.unit,
            'classification': self.classification.value,
            'cells': [cell.to_dict() for cell in self.cells],
        }
        if self.threshold is not None:
            payload['threshold'] = self.threshold
        if self.children:
            payload['groups'] = [child.to_dict() for child in self.children]
        return payload


@dataclass
class SeparationReport:
    findings: list[UnitFinding] = field(default_factory=list)
    tree: object | None = None
    witnesses: list = field(default_factory=list)

    @property
    def verdict(self) -> Classification:
        return Classification.worst(finding.classification for finding in self.findings)

    def extend(self, other: 'SeparationReport') -> 'SeparationReport':
        self.findings.extend(other.findings)
        return self

    def flagged(self) -> list[UnitFinding]:
        return [f for f in self.findings if f.classification is not Classification.OVERLAP]

    def to_dict(self) -> dict:
        payload = {
            'verdict': self.verdict.value,
            'findings': [finding.to_dict() for finding in self.findings],
        }
        if self.tree is not None:
            payload['tree'] = self.tree.to_dict()
            payload['witnesses'] = [w.to_dict() for w in self.witnesses]
        return payload

    def render(self) -> str:
        rows = [('source', 'unit', 'cells', 'pure', 'min p', 'max p', 'classification')]
        for finding in self.findings:
            rows.append(_table_row(finding))
            for child in finding.children:
                if child.classification is not Classification.OVERLAP:
                    rows.append(_table_row(child, indent='  '))
        widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
        lines = ['  '.join(value.ljust(width) for value, width in zip(row, widths)).rstrip() for row in rows]
        lines.insert(1, '  '.join('-' * width for width in widths))
        lines.append(f'verdict: {self.verdict.value}')
        if self.tree is not None:
            lines.append('')
            lines.append('classification tree:')
            lines.append(self.tree.render())
            for witness in self.witnesses:
                lines.append(f'witness: {witness.describe()}')
        return '\n'.join(lines)


def _table_row(finding: UnitFinding, indent: str = '') -> tuple[str, ...]:
    proportions = [cell.proportion for cell in finding.cells if not cell.empty]
    low = f'{min(proportions):.3f}' if proportions else '-'
    high = f'{max(proportions):.3f}' if proportions else '-'
    unit = finding.unit if finding.threshold is None else f'{finding.unit} (t={finding.threshold:g})'
    return (indent + finding.source, unit, str(len(finding.cells)), str(len(finding.pure_cells)),
            low, high, finding.classification.value)


def _cells_from_codes(codes: np.ndarray, y: np.ndarray, labels: Sequence[str]) -> tuple[Cell, ...]:
    counts = np.bincount(codes, minlength=len(labels))
    successes = np.bincount(codes, weights=y, minlength=len(labels))
    return tuple(Cell(label, int(c), int(round(s))) for label, c, s in zip(labels, counts, successes))


def _combined_codes(dataset: Dataset, names: Sequence[str]) -> tuple[np.ndarray, list[str]]:
    """Mixed-radix code over the listed factors; labels in level-major order of the first factor."""
    codes = np.zeros(dataset.n, dtype=np.int64)
    sizes = [len(dataset.levels[name]) for name in names]
    for name, size in zip(names, sizes):
        codes = codes * size + dataset[name]
    labels = [':'.join(combo) for combo in itertools.product(*(dataset.levels[name] for name in names))]
    return codes, labels


def scan_factor(dataset: Dataset, factor: str) -> SeparationReport:
    levels = dataset.levels[factor]
    cells = _cells_from_codes(dataset[factor], dataset.y, [f'{factor}={level}' for level in levels])
    finding = UnitFinding(factor, 'factor', factor, cells, classify_partition(cells))
    return SeparationReport([finding])


def scan_interaction(dataset: Dataset, term: Term) -> SeparationReport:
    names = list(dict.fromkeys(term.variables))
    codes, labels = _combined_codes(dataset, names)
    cells = _cells_from_codes(codes, dataset.y, labels)
    finding = UnitFinding(term.label, 'interaction', term.label, cells, classify_partition(cells))
    return SeparationReport([finding])


def _threshold_sides(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """For each distinct value t but the largest: (t, n_left, s_left, n_right, s_right) with ``x <= t`` on the left."""
    values, inverse = np.unique(x, return_inverse=True)
    counts = np.bincount(inverse, minlength=len(values))
    successes = np.bincount(inverse, weights=y, minlength=len(values))
    n_left = np.cumsum(counts)[:-1]
    s_left = np.rint(np.cumsum(successes)[:-1]).astype(np.int64)
    total, total_s = len(y), int(round(successes.sum()))
    return values[:-1], n_left, s_left, total - n_left, total_s - s_left


def scan_covariate(dataset: Dataset, covariate: str) -> SeparationReport:
    """
    Try every threshold at an observed value. Separation: some threshold leaves both sides pure.
    QuasiSeparation: some threshold leaves one side pure (the largest pure side is reported).
    Overlap: otherwise; the threshold with the largest difference in proportions is reported.
    """
    x = dataset[covariate]
    y = dataset.y
    thresholds, n_left, s_left, n_right, s_right = _threshold_sides(x, y)
    if len(thresholds) == 0:
        cells = (Cell(f'{covariate} (constant)', len(y), int(y.sum())),)
        return SeparationReport([UnitFinding(covariate, 'covariate', covariate, cells, classify_partition(cells))])

    left_pure = (s_left == 0) | (s_left == n_left)
    right_pure = (s_right == 0) | (s_right == n_right)
    both = np.flatnonzero(left_pure & right_pure)
    one = np.flatnonzero(left_pure ^ right_pure)
    if len(both):
        k = int(both[0])
    elif len(one):
        pure_size = np.where(left_pure, n_left, n_right)[one]
        k = int(one[np.argmax(pure_size)])
    else:
        gap = np.abs(s_left / n_left - s_right / n_right)
        k = int(np.argmax(gap))

    t = float(thresholds[k])
    cells = (Cell(f'{covariate}<={t:g}', int(n_left[k]), int(s_left[k])),
             Cell(f'{covariate}>{t:g}', int(n_right[k]), int(s_right[k])))
    finding = UnitFinding(covariate, 'covariate', covariate, cells, classify_partition(cells), threshold=t)
    return SeparationReport([finding])


def _slope_factors(dataset: Dataset, block: RandomBlock) -> list[str]:
    return [v for v in block.variables if dataset.kind(v) in (ColumnKind.FACTOR, ColumnKind.ORDERED)]


def scan_block(dataset: Dataset, block: RandomBlock) -> UnitFinding:
    """Cells are the block's slope-factor level combinations within each group."""
    group_codes = dataset[block.group]
    group_levels = dataset.levels[block.group]
    factors = _slope_factors(dataset, block)
    if factors:
        cell_codes, cell_labels = _combined_codes(dataset, factors)
    else:
        cell_codes, cell_labels = np.zeros(dataset.n, dtype=np.int64), ['all']
    n_cells = len(cell_labels)
    counts = np.bincount(group_codes * n_cells + cell_codes, minlength=len(group_levels) * n_cells)
    successes = np.bincount(group_codes * n_cells + cell_codes, weights=dataset.y,
                            minlength=len(group_levels) * n_cells)
    counts = counts.reshape(len(group_levels), n_cells)
    successes = np.rint(successes).astype(np.int64).reshape(len(group_levels), n_cells)

    children = []
    for g, level in enumerate(group_levels):
        if counts[g].sum() == 0:
            continue
        cells = tuple(Cell(label, int(c), int(s)) for label, c, s in zip(cell_labels, counts[g], successes[g]))
        children.append(UnitFinding(block.group, 'group', f'{block.group}={level}', cells, classify_cells(cells)))

    if children and all(c.classification is Classification.SEPARATION for c in children):
        summary = Classification.SEPARATION
    elif any(c.pure_cells for c in children):
        summary = Classification.QUASI_SEPARATION
    else:
        summary = Classification.OVERLAP
    pooled = tuple(Cell(f'{block.group}={group_levels[g]}', int(counts[g].sum()), int(successes[g].sum()))
                   for g in range(len(group_levels)))
    if classify_partition(pooled) is Classification.CONSTANT_RESPONSE:
        summary = Classification.CONSTANT_RESPONSE
    unit = ' x '.join([block.group, *factors])
    return UnitFinding(block.group, 'grouped', unit, pooled, summary, children=tuple(children))


def scan_grouped(dataset: Dataset, spec: ModelSpec) -> SeparationReport:
    report = SeparationReport([scan_block(dataset, block) for block in spec.random_blocks])
    for finding in report.findings:
        flagged = [c.unit for c in finding.children if c.classification is not Classification.OVERLAP]
        if flagged:
            _log.info(f'{finding.source}: {len(flagged)} of {len(finding.children)} groups have pure cells')
    return report


def _is_factor(dataset: Dataset, name: str) -> bool:
    return dataset.kind(name) in (ColumnKind.FACTOR, ColumnKind.ORDERED)


def scan_dataset(dataset: Dataset, spec: ModelSpec, *,
                 tree_depth: int = 6, min_leaf: int = 20, parallel: bool = True) -> SeparationReport:
    """
    Every scan the model spec calls for, in column order: fixed main effects, factor-only interactions,
    random blocks, then the classification-tree probe. The verdict comes from the scans; tree
    witnesses are reported alongside.
    """
    from .tree import fit_tree

    def run(job):
        what, target = job
        if what == 'factor':
            return scan_factor(dataset, target)
        if what == 'covariate':
            return scan_covariate(dataset, target)
        if what == 'interaction':
            return scan_interaction(dataset, target)
        return SeparationReport([scan_block(dataset, target)])

    jobs = []
    for name in spec.fixed_variables:
        jobs.append(('factor' if _is_factor(dataset, name) else 'covariate', name))
    for term in spec.fixed_terms:
        if term.order > 1 and all(_is_factor(dataset, v) for v in term.variables):
            jobs.append(('interaction', term))
    jobs += [('block', block) for block in spec.random_blocks]

    report = SeparationReport()
    for fragment in map_ordered(run, jobs, parallel=parallel):
        report.extend(fragment)

    report.tree = fit_tree(dataset, spec, max_depth=tree_depth, min_leaf=min_leaf)
    report.witnesses = report.tree.witnesses(min_leaf)
    if report.verdict is Classification.CONSTANT_RESPONSE:
        _log.warning(f'Response is {int(dataset.y[0])} in every row; no predictor can separate it')
    _log.info(f'Separation verdict: {report.verdict.value} ({len(report.flagged())} flagged units, '
              f'{len(report.witnesses)} tree witnesses)')
    return report
