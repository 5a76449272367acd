import itertools
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from formula import ModelSpec, Term
from .scaling import ScalingRecord, sum_contrasts
from .schema import Dataset

_log = logging.getLogger(__name__)

INTERCEPT = '(Intercept)'


def _matrix(values, rows: int) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    # reshape(rows, -1) cannot infer a zero width
    return values if values.ndim == 2 else values.reshape(rows, -1)


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, copy=True, order='C')
    array.flags.writeable = False
    return array


@dataclass(frozen=True, eq=False)
class BlockDesign:
    """One random-effects block: ``Z`` (n x q) and the row -> group map ``index`` into ``levels``."""
    group: str
    Z: np.ndarray
    index: np.ndarray
    levels: tuple[str, ...]
    column_names: tuple[str, ...]
    has_intercept: bool = True
    slope_variables: tuple[tuple[str, ...], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, 'Z', _frozen(_matrix(self.Z, len(self.index))))
        object.__setattr__(self, 'index', _frozen(np.asarray(self.index, dtype=np.int64)))

    @property
    def q(self) -> int:
        return self.Z.shape[1]

    @property
    def n_groups(self) -> int:
        return len(self.levels)

    def rows_by_group(self) -> list[np.ndarray]:
        order = np.argsort(self.index, kind='stable')
        bounds = np.cumsum(np.bincount(self.index, minlength=self.n_groups))
        return np.split(order, bounds[:-1])


@dataclass(frozen=True, eq=False)
class DesignMatrices:
    """
    Everything the fitters need: ``y`` (n), ``X`` (n x p, no intercept column), random blocks,
    and the ScalingRecord that produced the standardized columns. Arrays are read-only.
    """
    y: np.ndarray
    X: np.ndarray
    column_names: tuple[str, ...]
    blocks: tuple[BlockDesign, ...] = ()
    scaling: ScalingRecord | None = None
    column_terms: tuple[tuple[str, ...], ...] = field(default=())

    def __post_init__(self):
        y = _frozen(np.asarray(self.y, dtype=float))
        object.__setattr__(self, 'y', y)
        object.__setattr__(self, 'X', _frozen(_matrix(self.X, len(y))))
        if not self.column_terms:
            object.__setattr__(self, 'column_terms', tuple((name,) for name in self.column_names))
        if self.X.shape[1] != len(self.column_names):
            raise ValueError(f'X has {self.X.shape[1]} columns but {len(self.column_names)} names')

    @property
    def n(self) -> int:
        return len(self.y)

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def block(self, group: str) -> BlockDesign:
        for block in self.blocks:
            if block.group == group:
                return block
        raise KeyError(group)

    def dimensions(self) -> dict:
        return {
            'n': self.n,
            'p': self.p,
            'blocks': [{'group': b.group, 'q': b.q, 'groups': b.n_groups} for b in self.blocks],
        }

    def unpooled(self) -> 'DesignMatrices':
        """
        The "no pooling" fixed-effects design: each grouping factor enters as scaled sum contrasts and
        is crossed with that block's slope columns; there are no random blocks left.
        """
        columns = [self.X]
        names = list(self.column_names)
        terms = list(self.column_terms)
        for block in self.blocks:
            if block.n_groups < 2:
                continue
            contrast = sum_contrasts(block.group, block.levels, list(range(block.n_groups)))
            dummies = contrast.encode(block.index)
            for j, (z_name, z_vars) in enumerate(zip(block.column_names, _block_terms(block))):
                columns.append(dummies * block.Z[:, [j]])
                for dummy_name in contrast.column_names:
                    names.append(dummy_name if z_name == INTERCEPT else f'{dummy_name}:{z_name}')
                    terms.append((block.group, *z_vars))
        return DesignMatrices(self.y, np.hstack(columns), tuple(names), (), self.scaling, tuple(terms))

    def intercept_block(self, group: str | None = None) -> 'DesignMatrices':
        """Same fixed part, one random-intercept block (the first block unless ``group`` is given)."""
        if not self.blocks:
            raise ValueError('design has no random blocks')
        source = self.block(group) if group is not None else self.blocks[0]
        block = BlockDesign(source.group, np.ones((self.n, 1)), source.index, source.levels, (INTERCEPT,), True)
        return replace(self, blocks=(block,))


def _block_terms(block: BlockDesign) -> list[tuple[str, ...]]:
    terms = [()] if block.has_intercept else []
    return terms + list(block.slope_variables)


def term_columns(term: Term, encodings: dict[str, np.ndarray],
                 names: dict[str, tuple[str, ...]]) -> tuple[np.ndarray, list[str]]:
    """Columns of a term: elementwise products of every combination of its parents' columns."""
    variables = list(dict.fromkeys(term.variables))
    parts = [range(encodings[v].shape[1]) for v in variables]
    columns, labels = [], []
    for combo in itertools.product(*parts):
        column = np.ones(encodings[variables[0]].shape[0])
        for v, j in zip(variables, combo):
            column = column * encodings[v][:, j]
        columns.append(column)
        labels.append(':'.join(names[v][j] for v, j in zip(variables, combo)))
    return np.column_stack(columns), labels


def build_design(dataset: Dataset, spec: ModelSpec, scaling: ScalingRecord) -> DesignMatrices:
    encodings = scaling.apply(dataset)
    names = {name: scaling[name].column_names for name in scaling.names}
    n = dataset.n

    fixed_columns, fixed_names, fixed_terms = [], [], []
    for term in spec.fixed_terms:
        columns, labels = term_columns(term, encodings, names)
        fixed_columns.append(columns)
        fixed_names += labels
        fixed_terms += [term.variables] * len(labels)
    X = np.hstack(fixed_columns) if fixed_columns else np.zeros((n, 0))

    blocks = []
    for random_block in spec.random_blocks:
        columns = [np.ones((n, 1))] if random_block.has_intercept else []
        labels = [INTERCEPT] if random_block.has_intercept else []
        slope_vars = []
        for term in random_block.slope_terms:
            term_cols, term_labels = term_columns(term, encodings, names)
            columns.append(term_cols)
            labels += term_labels
            slope_vars += [term.variables] * len(term_labels)
        codes = dataset[random_block.group]
        all_levels = dataset.levels[random_block.group]
        observed = np.unique(codes)
        # compact to the observed levels, keeping declared order
        remap = np.full(len(all_levels), -1, dtype=np.int64)
        remap[observed] = np.arange(len(observed))
        blocks.append(BlockDesign(
            group=random_block.group,
            Z=np.hstack(columns),
            index=remap[codes],
            levels=tuple(all_levels[i] for i in observed),
            column_names=tuple(labels),
            has_intercept=random_block.has_intercept,
            slope_variables=tuple(slope_vars),
        ))

    design = DesignMatrices(dataset.y, X, tuple(fixed_names), tuple(blocks), scaling, tuple(fixed_terms))
    _log.info(f'Design: n={design.n}, p={design.p}, '
              + ', '.join(f'{b.group}: q={b.q} x {b.n_groups} groups' for b in design.blocks))
    return design
