import json
import os

os.environ.setdefault('SEPFIT_PROGRESS', '0')

import numpy as np
import pandas as pd
import pytest

from data import ColumnSchema, Dataset, build_design, standardize
from formula import parse_formula


def dataset_from(columns: dict, schema: dict) -> Dataset:
    """Typed dataset from plain Python columns and a schema mapping, as if read from CSV."""
    frame = pd.DataFrame({name: [str(v) for v in values] for name, values in columns.items()})
    return Dataset.from_frame(frame, ColumnSchema.from_dict(schema))


def design_from(columns: dict, schema: dict, formula: str):
    spec = parse_formula(formula)
    dataset = dataset_from(columns, schema)
    return build_design(dataset, spec, standardize(dataset, spec))


def two_level_counts(successes_a: int, successes_b: int, n: int = 20) -> Dataset:
    """Factor ``g`` with levels A and B, ``n`` rows each, with the given success counts."""
    y = [1] * successes_a + [0] * (n - successes_a) + [1] * successes_b + [0] * (n - successes_b)
    g = ['A'] * n + ['B'] * n
    return dataset_from({'y': y, 'g': g}, {'y': 'response', 'g': {'kind': 'factor', 'levels': ['A', 'B']}})


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def write_inputs(tmp_path):
    """Write ``columns`` as data.csv and ``schema`` as schema.json under tmp_path; returns both paths."""

    def write(columns: dict, schema: dict, name: str = 'data.csv'):
        data_path = tmp_path / name
        pd.DataFrame(columns).to_csv(data_path, index=False)
        schema_path = tmp_path / 'schema.json'
        schema_path.write_text(json.dumps(schema), encoding='utf-8')
        return data_path, schema_path

    return write


@pytest.fixture
def grouped_scenario():
    """Random intercept plus a binary condition slope over 20 subjects."""
    return {
        'formula': 'y ~ x + cond + (1 + cond | subj)',
        'n': 2000,
        'groups': {'subj': 20},
        'predictors': {
            'x': {'kind': 'covariate', 'distribution': 'normal', 'mean': 0.0, 'sd': 1.0},
            'cond': {'kind': 'factor', 'levels': ['a', 'b']},
        },
        'intercept': -0.5,
        'beta': {'x': 0.8, 'cond[a]': -0.4},
        'sigma': {'subj': [0.7, 0.5]},
        'correlation': {'subj': [[1.0, 0.3], [0.3, 1.0]]},
    }


def counts_design(successes_a: int, successes_b: int, n: int = 20):
    """``y ~ g`` on ``two_level_counts``."""
    dataset = two_level_counts(successes_a, successes_b, n)
    spec = parse_formula('y ~ g')
    return build_design(dataset, spec, standardize(dataset, spec))
