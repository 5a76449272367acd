import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np
import pandas as pd

from errors import SchemaError, DataError
from utils.io_utils import read_json
from utils.validator import is_identifier, is_missing, parse_float

_log = logging.getLogger(__name__)


class ColumnKind(Enum):
    COVARIATE = 'covariate'
    FACTOR = 'factor'
    ORDERED = 'ordered'
    RESPONSE = 'response'


@dataclass(frozen=True)
class Column:
    name: str
    kind: ColumnKind
    levels: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.levels is None:
            return
        if not self.levels:
            raise SchemaError(f"column '{self.name}': level list is empty")
        if len(set(self.levels)) != len(self.levels):
            raise SchemaError(f"column '{self.name}': duplicate levels in {list(self.levels)}")
        if self.kind is ColumnKind.COVARIATE:
            raise SchemaError(f"column '{self.name}': covariates take no levels")

    @property
    def is_factor(self) -> bool:
        return self.kind in (ColumnKind.FACTOR, ColumnKind.ORDERED)

    def to_dict(self) -> dict:
        payload: dict = {'kind': self.kind.value}
        if self.levels is not None:
            payload['levels'] = list(self.levels)
        return payload


class ColumnSchema:
    """Declared kind (and, for factors, level order) of every column, with exactly one response."""

    def __init__(self, columns: Iterable[Column]):
        self._columns: dict[str, Column] = {}
        for column in columns:
            if not is_identifier(column.name):
                raise SchemaError(f"column name '{column.name}' is not a valid identifier")
            if column.name in self._columns:
                raise SchemaError(f"column '{column.name}' declared twice")
            self._columns[column.name] = column
        responses = [c.name for c in self._columns.values() if c.kind is ColumnKind.RESPONSE]
        if len(responses) != 1:
            raise SchemaError(f'schema must declare exactly one response column, found {len(responses)}')

    @classmethod
    def from_dict(cls, payload: dict) -> 'ColumnSchema':
        columns = []
        for name, spec in payload.items():
            if isinstance(spec, str):
                spec = {'kind': spec}
            try:
                kind = ColumnKind(spec['kind'])
            except (KeyError, ValueError, TypeError):
                raise SchemaError(f"column '{name}': kind must be one of {[k.value for k in ColumnKind]}") from None
            levels = spec.get('levels')
            columns.append(Column(name, kind, tuple(str(level) for level in levels) if levels is not None else None))
        return cls(columns)

    @classmethod
    def from_json(cls, path: str | Path) -> 'ColumnSchema':
        path = Path(path)
        if not path.is_file():
            raise SchemaError(f'schema file not found: {path}')
        try:
            payload = read_json(path)
        except ValueError as e:
            raise SchemaError(f'schema file {path} is not valid JSON: {e}') from None
        if not isinstance(payload, dict):
            raise SchemaError(f'schema file {path} must hold a JSON object')
        return cls.from_dict(payload)

    def to_dict(self) -> dict:
        return {name: column.to_dict() for name, column in self._columns.items()}

    @property
    def response(self) -> Column:
        return next(c for c in self._columns.values() if c.kind is ColumnKind.RESPONSE)

    def __getitem__(self, name: str) -> Column:
        return self._columns[name]

    def __contains__(self, name: str) -> bool:
        return name in self._columns

    def __iter__(self) -> Iterator[Column]:
        return iter(self._columns.values())

    def __len__(self):
        return len(self._columns)


@dataclass
class Dataset:
    """
    Typed columns after listwise deletion.

    Covariates are float64, factors are int codes into ``levels[name]``, the response is 0/1 int8.
    """
    columns: dict[str, np.ndarray]
    levels: dict[str, tuple[str, ...]]
    schema: ColumnSchema
    dropped: dict[str, int] = field(default_factory=dict)
    source: Path | None = None

    @property
    def n(self) -> int:
        return len(self.y)

    @property
    def y(self) -> np.ndarray:
        return self.columns[self.schema.response.name]

    def kind(self, name: str) -> ColumnKind:
        return self.schema[name].kind

    def __getitem__(self, name: str) -> np.ndarray:
        return self.columns[name]

    def labels(self, name: str) -> np.ndarray:
        """Factor codes mapped back to level strings."""
        return np.asarray(self.levels[name], dtype=object)[self.columns[name]]

    def take(self, rows: np.ndarray) -> 'Dataset':
        return Dataset({k: v[rows] for k, v in self.columns.items()}, dict(self.levels), self.schema,
                       dict(self.dropped), self.source)

    @classmethod
    def from_frame(cls, frame: pd.DataFrame, schema: ColumnSchema,
                   columns: Iterable[str] | None = None, source: Path | None = None) -> 'Dataset':
        """Type the string cells of ``frame`` according to ``schema``; missing cells drop their row."""
        names = list(columns) if columns is not None else [c.name for c in schema]
        response = schema.response.name
        if response not in names:
            names.insert(0, response)
        for name in names:
            if name not in schema:
                raise SchemaError(f"column '{name}' is not declared in the schema")
            if name not in frame.columns:
                raise DataError(f"column '{name}' not found in data header")

        cells = {name: frame[name].astype(str).to_numpy(dtype=object) for name in names}
        missing = {name: np.fromiter((is_missing(c) for c in col), bool, len(col)) for name, col in cells.items()}
        keep = ~np.logical_or.reduce(list(missing.values())) if missing else np.ones(len(frame), bool)
        dropped = {name: int(mask.sum()) for name, mask in missing.items() if mask.any()}
        if dropped:
            _log.warning(f'Dropped {int((~keep).sum())} rows with missing values '
                         f'({", ".join(f"{k}: {v}" for k, v in dropped.items())})')
        if not keep.any():
            raise DataError('no usable rows after removing missing values')

        row_numbers = np.flatnonzero(keep) + 2  # header is line 1
        typed: dict[str, np.ndarray] = {}
        levels: dict[str, tuple[str, ...]] = {}
        for name in names:
            column = schema[name]
            values = [c.strip() for c in cells[name][keep]]
            if column.kind is ColumnKind.COVARIATE:
                typed[name] = _parse_covariate(name, values, row_numbers)
            elif column.kind is ColumnKind.RESPONSE:
                typed[name] = _parse_response(column, values, row_numbers)
            else:
                declared = column.levels if column.levels is not None else tuple(sorted(set(values)))
                typed[name] = _parse_factor(name, declared, values, row_numbers)
                levels[name] = declared

        return cls(typed, levels, schema, dropped, source)


def _parse_covariate(name: str, values: list[str], rows: np.ndarray) -> np.ndarray:
    out = np.empty(len(values))
    for i, cell in enumerate(values):
        value = parse_float(cell)
        if value is None:
            raise DataError(f"row {rows[i]}, column '{name}': cannot parse {cell!r} as a number")
        out[i] = value
    return out


def _parse_factor(name: str, levels: tuple[str, ...], values: list[str], rows: np.ndarray) -> np.ndarray:
    index = {level: code for code, level in enumerate(levels)}
    out = np.empty(len(values), dtype=np.int64)
    for i, cell in enumerate(values):
        code = index.get(cell)
        if code is None:
            raise DataError(f"row {rows[i]}, column '{name}': {cell!r} is not one of the levels {list(levels)}")
        out[i] = code
    return out


def _parse_response(column: Column, values: list[str], rows: np.ndarray) -> np.ndarray:
    out = np.empty(len(values), dtype=np.int8)
    if column.levels is not None:
        if len(column.levels) != 2:
            raise DataError(f"response '{column.name}' is not binary: {len(column.levels)} levels declared")
        # levels are [failure, success]
        return _parse_factor(column.name, column.levels, values, rows).astype(np.int8)
    for i, cell in enumerate(values):
        value = parse_float(cell)
        if value not in (0.0, 1.0):
            raise DataError(f"row {rows[i]}, column '{column.name}': response must be 0 or 1, found {cell!r}")
        out[i] = int(value)
    return out


def load_csv(path: str | Path, schema: ColumnSchema, columns: Iterable[str] | None = None) -> Dataset:
    """
    Read a comma-delimited UTF-8 file with a header row. ``NA`` and empty cells are missing;
    rows with a missing value in any used column are dropped and counted per column.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f'data file not found: {path}')
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, na_filter=False, encoding='utf-8')
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise DataError(f'cannot read {path}: {e}') from None
    dataset = Dataset.from_frame(frame, schema, columns, source=path)
    _log.info(f'Loaded {dataset.n} rows from {path}')
    return dataset
