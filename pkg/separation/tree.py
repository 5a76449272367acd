"""
Binary CART probe for pockets of separation.

Gini impurity, greedy best split. Covariates split at midpoints between consecutive distinct values,
ordered factors at level-code midpoints, unordered factors and grouping columns along their levels
sorted by success proportion. Ties go to the leftmost column, then the smallest threshold.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from data.schema import ColumnKind, Dataset
from formula import ModelSpec

_log = logging.getLogger(__name__)

_MIN_GAIN = 1e-12


def gini(count, successes) -> np.ndarray:
    count = np.asarray(count, dtype=float)
    p = np.divide(np.asarray(successes, dtype=float), count, out=np.zeros_like(count), where=count > 0)
    return 2.0 * p * (1.0 - p)


@dataclass
class Split:
    column: str
    kind: str
    threshold: float | None = None
    left_levels: tuple[str, ...] | None = None

    def describe(self, left: bool) -> str:
        if self.left_levels is not None:
            levels = ','.join(self.left_levels)
            return f'{self.column} in {{{levels}}}' if left else f'{self.column} not in {{{levels}}}'
        op = '<=' if left else '>'
        return f'{self.column} {op} {self.threshold:g}'

    def to_dict(self) -> dict:
        payload = {'column': self.column, 'kind': self.kind}
        if self.left_levels is not None:
            payload['left_levels'] = list(self.left_levels)
        else:
            payload['threshold'] = self.threshold
        return payload


@dataclass
class Witness:
    conditions: tuple[str, ...]
    count: int
    proportion: float

    def describe(self) -> str:
        where = ' and '.join(self.conditions) or 'all rows'
        return f'{where}: n={self.count}, p={self.proportion:g}'

    def to_dict(self) -> dict:
        return {'conditions': list(self.conditions), 'count': self.count, 'proportion': self.proportion}


@dataclass
class TreeNode:
    count: int
    successes: int
    depth: int = 0
    split: Split | None = None
    left: 'TreeNode | None' = None
    right: 'TreeNode | None' = None
    rows: np.ndarray | None = field(default=None, repr=False)

    @property
    def proportion(self) -> float:
        return self.successes / self.count if self.count else float('nan')

    @property
    def impurity(self) -> float:
        return float(gini(self.count, self.successes))

    @property
    def is_leaf(self) -> bool:
        return self.split is None

    @property
    def pure(self) -> bool:
        return self.count > 0 and self.successes in (0, self.count)

    def leaves(self) -> list['TreeNode']:
        if self.is_leaf:
            return [self]
        return self.left.leaves() + self.right.leaves()

    def witnesses(self, min_leaf: int) -> list[Witness]:
        """Pure leaves holding at least ``min_leaf`` rows, with the path that isolates them."""
        found = []

        def walk(node: TreeNode, path: tuple[str, ...]):
            if node.is_leaf:
                if node.pure and node.count >= min_leaf:
                    found.append(Witness(path, node.count, node.proportion))
                return
            walk(node.left, path + (node.split.describe(True),))
            walk(node.right, path + (node.split.describe(False),))

        walk(self, ())
        return found

    def render(self, indent: str = '  ') -> str:
        lines = []

        def walk(node: TreeNode, label: str, level: int):
            mark = ' *' if node.is_leaf and node.pure else ''
            lines.append(f'{indent * level}{label}n={node.count} p={node.proportion:.3f} gini={node.impurity:.4f}{mark}')
            if not node.is_leaf:
                walk(node.left, f'[{node.split.describe(True)}] ', level + 1)
                walk(node.right, f'[{node.split.describe(False)}] ', level + 1)

        walk(self, '', 0)
        return '\n'.join(lines)

    def to_dict(self) -> dict:
        payload = {'count': self.count, 'proportion': self.proportion, 'impurity': self.impurity}
        if not self.is_leaf:
            payload['split'] = self.split.to_dict()
            payload['left'] = self.left.to_dict()
            payload['right'] = self.right.to_dict()
        return payload


@dataclass
class _Feature:
    name: str
    kind: str  # numeric, ordered or categorical
    values: np.ndarray
    levels: tuple[str, ...] = ()


def _features(dataset: Dataset, spec: ModelSpec) -> list[_Feature]:
    features = []
    for name in [*spec.variables, *spec.grouping_factors]:
        kind = dataset.kind(name)
        if kind is ColumnKind.COVARIATE:
            features.append(_Feature(name, 'numeric', np.asarray(dataset[name], dtype=float)))
        elif kind is ColumnKind.ORDERED:
            features.append(_Feature(name, 'ordered', np.asarray(dataset[name], dtype=float), dataset.levels[name]))
        else:
            features.append(_Feature(name, 'categorical', np.asarray(dataset[name]), dataset.levels[name]))
    return features


def _best_numeric(x: np.ndarray, y: np.ndarray, min_leaf: int):
    values, inverse = np.unique(x, return_inverse=True)
    if len(values) < 2:
        return None
    counts = np.bincount(inverse)
    successes = np.bincount(inverse, weights=y)
    n_left = np.cumsum(counts)[:-1]
    s_left = np.cumsum(successes)[:-1]
    n_right = len(y) - n_left
    s_right = successes.sum() - s_left
    score = (n_left * gini(n_left, s_left) + n_right * gini(n_right, s_right)) / len(y)
    score[(n_left < min_leaf) | (n_right < min_leaf)] = np.inf
    k = int(np.argmin(score))
    if not np.isfinite(score[k]):
        return None
    return float(score[k]), 0.5 * (values[k] + values[k + 1]), None


def _best_categorical(codes: np.ndarray, y: np.ndarray, n_levels: int, min_leaf: int):
    counts = np.bincount(codes, minlength=n_levels)
    successes = np.bincount(codes, weights=y, minlength=n_levels)
    present = np.flatnonzero(counts)
    if len(present) < 2:
        return None
    # ordering by success proportion makes the best binary partition a prefix of this order
    order = present[np.lexsort((present, successes[present] / counts[present]))]
    n_left = np.cumsum(counts[order])[:-1]
    s_left = np.cumsum(successes[order])[:-1]
    n_right = len(y) - n_left
    s_right = successes.sum() - s_left
    score = (n_left * gini(n_left, s_left) + n_right * gini(n_right, s_right)) / len(y)
    score[(n_left < min_leaf) | (n_right < min_leaf)] = np.inf
    k = int(np.argmin(score))
    if not np.isfinite(score[k]):
        return None
    return float(score[k]), float(k), tuple(int(c) for c in order[:k + 1])


def _grow(features: list[_Feature], y: np.ndarray, rows: np.ndarray, depth: int,
          max_depth: int, min_leaf: int) -> TreeNode:
    node_y = y[rows]
    node = TreeNode(len(rows), int(node_y.sum()), depth, rows=rows)
    if depth >= max_depth or node.pure or len(rows) < 2 * min_leaf:
        return node

    parent = node.impurity
    best = None
    for feature in features:
        values = feature.values[rows]
        if feature.kind == 'categorical':
            found = _best_categorical(values, node_y, len(feature.levels), min_leaf)
        else:
            found = _best_numeric(values, node_y, min_leaf)
        if found is None:
            continue
        score, threshold, left_codes = found
        if best is None or score < best[0] - _MIN_GAIN:
            best = (score, feature, threshold, left_codes)

    if best is None or parent - best[0] <= _MIN_GAIN:
        return node

    _, feature, threshold, left_codes = best
    values = feature.values[rows]
    if left_codes is not None:
        go_left = np.isin(values, left_codes)
        node.split = Split(feature.name, 'categorical', left_levels=tuple(feature.levels[c] for c in left_codes))
    else:
        go_left = values <= threshold
        if feature.kind == 'ordered':
            # report the last level on the left rather than a fractional code
            node.split = Split(feature.name, 'ordered',
                               left_levels=tuple(feature.levels[: int(np.floor(threshold)) + 1]))
        else:
            node.split = Split(feature.name, 'numeric', threshold=float(threshold))
    node.left = _grow(features, y, rows[go_left], depth + 1, max_depth, min_leaf)
    node.right = _grow(features, y, rows[~go_left], depth + 1, max_depth, min_leaf)
    return node


def fit_tree(dataset: Dataset, spec: ModelSpec, max_depth: int = 6, min_leaf: int = 20) -> TreeNode:
    """
    Grow the tree over every predictor plus the grouping factors.

    Raises:
        ValueError: ``max_depth`` or ``min_leaf`` below 1.
    """
    if max_depth < 1 or min_leaf < 1:
        raise ValueError('max_depth and min_leaf must be at least 1')
    y = np.asarray(dataset.y, dtype=float)
    root = _grow(_features(dataset, spec), y, np.arange(dataset.n), 0, max_depth, min_leaf)
    leaves = root.leaves()
    _log.debug(f'Tree: {len(leaves)} leaves, {sum(leaf.pure for leaf in leaves)} pure')
    return root
