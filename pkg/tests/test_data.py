import numpy as np
import pytest
from numpy.testing import assert_allclose

from conftest import dataset_from, design_from
from data import ColumnSchema, ScalingRecord, build_design, check_identifiability, load_csv, standardize
from data.scaling import orthogonal_polynomials
from errors import DataError, SchemaError, ScalingError
from formula import parse_formula

SCHEMA = {'y': 'response', 'x': 'covariate', 'g': {'kind': 'factor', 'levels': ['a', 'b']}}
GROUPED_SCHEMA = SCHEMA | {'s': 'factor'}


def _columns(n=50, seed=0):
    rng = np.random.default_rng(seed)
    return {
        'y': rng.integers(0, 2, n).tolist(),
        'x': np.round(rng.normal(size=n), 6).tolist(),
        'g': rng.choice(['a', 'b'], n).tolist(),
    }


class TestLoading:
    def test_reads_every_row(self, write_inputs):
        data, schema = write_inputs(_columns(), SCHEMA)
        dataset = load_csv(data, ColumnSchema.from_json(schema))
        assert dataset.n == 50
        assert dataset['y'].dtype == np.int8
        assert dataset['g'].dtype == np.int64
        assert dataset.levels['g'] == ('a', 'b')
        assert dataset.dropped == {}

    def test_unparseable_covariate_names_row_and_column(self, write_inputs):
        columns = _columns()
        columns['x'][6] = 'abc'
        data, schema = write_inputs(columns, SCHEMA)
        with pytest.raises(DataError, match=r"row 8, column 'x': cannot parse 'abc'"):
            load_csv(data, ColumnSchema.from_json(schema))

    def test_missing_responses_drop_rows(self, write_inputs):
        columns = _columns()
        for i in (3, 10, 41):
            columns['y'][i] = 'NA'
        columns['x'][10] = ''
        data, schema = write_inputs(columns, SCHEMA)
        dataset = load_csv(data, ColumnSchema.from_json(schema))
        assert dataset.n == 47
        assert dataset.dropped == {'y': 3, 'x': 1}

    def test_undeclared_level(self, write_inputs):
        columns = _columns()
        columns['g'][0] = 'c'
        data, schema = write_inputs(columns, SCHEMA)
        with pytest.raises(DataError, match="'c' is not one of the levels"):
            load_csv(data, ColumnSchema.from_json(schema))

    def test_response_must_be_zero_or_one(self, write_inputs):
        columns = _columns()
        columns['y'][5] = 2
        data, schema = write_inputs(columns, SCHEMA)
        with pytest.raises(DataError, match='response must be 0 or 1'):
            load_csv(data, ColumnSchema.from_json(schema))

    def test_missing_files(self, tmp_path):
        with pytest.raises(SchemaError, match='schema file not found'):
            ColumnSchema.from_json(tmp_path / 'nope.json')
        with pytest.raises(DataError, match='data file not found'):
            load_csv(tmp_path / 'nope.csv', ColumnSchema.from_dict(SCHEMA))

    def test_levels_inferred_when_undeclared(self):
        dataset = dataset_from({'y': [0, 1, 1], 's': ['s2', 's1', 's2']}, {'y': 'response', 's': 'factor'})
        assert dataset.levels['s'] == ('s1', 's2')
        assert dataset.labels('s').tolist() == ['s2', 's1', 's2']

    @pytest.mark.parametrize('schema, fragment', [
        ({'x': 'covariate'}, 'exactly one response'),
        ({'y': 'response', 'z': 'response'}, 'exactly one response'),
        ({'y': 'response', 'x': 'numeric'}, 'kind must be one of'),
        ({'y': 'response', 'g': {'kind': 'factor', 'levels': ['a', 'a']}}, 'duplicate levels'),
        ({'y': 'response', 'x': {'kind': 'covariate', 'levels': ['a']}}, 'take no levels'),
        ({'y': 'response', '1x': 'covariate'}, 'not a valid identifier'),
    ])
    def test_schema_rejections(self, schema, fragment):
        with pytest.raises(SchemaError, match=fragment):
            ColumnSchema.from_dict(schema)


class TestScaling:
    def test_covariate_trial_scale(self):
        trial = np.arange(1, 769)
        dataset = dataset_from({'y': trial % 2, 'trial': trial}, {'y': 'response', 'trial': 'covariate'})
        scaling = standardize(dataset, parse_formula('y ~ trial'))
        entry = scaling['trial']
        assert entry.center == pytest.approx(384.5)
        assert entry.divisor == pytest.approx(443.694, abs=1e-3)
        encoded = scaling.encode(dataset, 'trial')[:, 0]
        assert encoded.mean() == pytest.approx(0, abs=1e-12)
        assert encoded.std(ddof=1) == pytest.approx(0.5)

    def test_binary_factor_and_interaction(self):
        design = design_from(
            {'y': [0, 1, 0, 1, 1, 0], 'g': ['go', 'go', 'nogo', 'nogo', 'go', 'nogo'],
             'h': ['u', 'v', 'u', 'v', 'v', 'u']},
            {'y': 'response', 'g': {'kind': 'factor', 'levels': ['go', 'nogo']}, 'h': 'factor'},
            'y ~ g*h')
        assert design.column_names == ('g[go]', 'h[u]', 'g[go]:h[u]')
        assert design.X[:, 0].tolist() == [0.5, 0.5, -0.5, -0.5, 0.5, -0.5]
        assert set(np.abs(design.X[:, 2])) == {0.25}
        assert_allclose(design.X[:, 2], design.X[:, 0] * design.X[:, 1])

    def test_sum_contrast_is_nominal_under_imbalance(self):
        dataset = dataset_from({'y': [0, 1, 1, 0], 'g': ['a', 'a', 'a', 'b']}, {'y': 'response', 'g': 'factor'})
        scaling = standardize(dataset, parse_formula('y ~ g'))
        assert scaling.encode(dataset, 'g')[:, 0].tolist() == [0.5, 0.5, 0.5, -0.5]

    def test_three_level_sum_contrasts(self):
        dataset = dataset_from({'y': [0, 1, 1, 0, 1, 0], 'c': list('abcabc')}, {'y': 'response', 'c': 'factor'})
        contrast = standardize(dataset, parse_formula('y ~ c'))['c']
        assert contrast.column_names == ('c[a]', 'c[b]')
        assert contrast.matrix.tolist() == [[0.5, 0], [0, 0.5], [-0.5, -0.5]]

    def test_polynomial_contrasts_have_sd_half(self):
        levels = ['low', 'mid', 'high', 'top']
        dataset = dataset_from(
            {'y': [0, 1] * 10, 'o': [levels[i % 4] for i in range(20)]},
            {'y': 'response', 'o': {'kind': 'ordered', 'levels': levels}})
        scaling = standardize(dataset, parse_formula('y ~ o'))
        assert scaling['o'].column_names == ('o.L', 'o.Q', 'o.C')
        encoded = scaling.encode(dataset, 'o')
        assert_allclose(encoded.std(axis=0, ddof=1), 0.5)
        assert np.all(np.diff(encoded[:4, 0]) > 0)

    def test_orthogonal_polynomials(self):
        basis = orthogonal_polynomials(5)
        assert_allclose(basis.T @ basis, np.eye(4), atol=1e-12)
        assert_allclose(basis.sum(axis=0), 0, atol=1e-12)

    def test_zero_variance_and_single_level(self):
        dataset = dataset_from({'y': [0, 1, 1], 'x': [2, 2, 2], 'g': ['a', 'a', 'a']}, SCHEMA)
        with pytest.raises(ScalingError, match="covariate 'x' has zero variance"):
            standardize(dataset, parse_formula('y ~ x'))
        with pytest.raises(ScalingError, match="factor 'g' has a single observed level"):
            standardize(dataset, parse_formula('y ~ g'))

    def test_inverse_and_serialized_record(self):
        dataset = dataset_from(_columns(), SCHEMA)
        scaling = standardize(dataset, parse_formula('y ~ x + g'))
        encoded = scaling.encode(dataset, 'x')[:, 0]
        assert_allclose(scaling.invert('x', encoded), dataset['x'], atol=1e-12)
        restored = ScalingRecord.from_dict(scaling.to_dict())
        for name in ('x', 'g'):
            assert_allclose(restored.encode(dataset, name), scaling.encode(dataset, name))
        with pytest.raises(TypeError):
            scaling.invert('g', encoded)

    def test_natural_divisor(self):
        dataset = dataset_from(_columns() | {'z': list(range(50))}, SCHEMA | {'z': 'covariate'})
        scaling = standardize(dataset, parse_formula('y ~ x*z + g'))
        assert scaling.natural_divisor(('x', 'z')) == pytest.approx(scaling['x'].divisor * scaling['z'].divisor)
        assert scaling.natural_divisor(('x', 'g')) is None


class TestDesign:
    FORMULA = 'y ~ x*g + (1 + g | s)'
    SCHEMA = GROUPED_SCHEMA

    def _columns(self):
        columns = _columns(n=60, seed=3)
        columns['s'] = [f's{i % 6}' for i in range(60)]
        return columns

    def test_shapes_and_blocks(self):
        design = design_from(self._columns(), self.SCHEMA, self.FORMULA)
        assert design.column_names == ('x', 'g[a]', 'x:g[a]')
        assert design.X.shape == (60, 3)
        block = design.block('s')
        assert block.column_names == ('(Intercept)', 'g[a]')
        assert block.q == 2 and block.n_groups == 6
        assert not design.X.flags.writeable

    def test_row_permutation_invariance(self):
        columns = self._columns()
        perm = np.random.default_rng(9).permutation(60)
        shuffled = {k: [v[i] for i in perm] for k, v in columns.items()}
        a = design_from(columns, self.SCHEMA, self.FORMULA)
        b = design_from(shuffled, self.SCHEMA, self.FORMULA)
        assert_allclose(b.X, a.X[perm], atol=1e-12)
        assert_allclose(b.blocks[0].Z, a.blocks[0].Z[perm])

    def test_unpooled_crosses_groups_with_slopes(self):
        design = design_from(self._columns(), self.SCHEMA, self.FORMULA)
        flat = design.unpooled()
        assert flat.blocks == ()
        # 5 group contrasts for the intercept and 5 crossed with g
        assert flat.p == design.p + 10
        assert 's[s0]' in flat.column_names
        assert 's[s0]:g[a]' in flat.column_names

    def test_intercept_block(self):
        design = design_from(self._columns(), self.SCHEMA, self.FORMULA)
        single = design.intercept_block()
        assert single.blocks[0].q == 1
        assert_allclose(single.X, design.X)


class TestIdentifiability:
    def test_parameter_count(self):
        columns = _columns(n=60)
        columns['s'] = [f's{i % 6}' for i in range(60)]
        design = design_from(columns, GROUPED_SCHEMA, 'y ~ x*g + (1 + g | s)')
        report = check_identifiability(design)
        # 1 + 3 fixed, 2 x 6 random, 2 SDs and 1 correlation
        assert report.n_parameters == 4 + 12 + 3
        assert report.passed

    def test_too_few_observations(self):
        columns = _columns(n=50)
        columns['s'] = [f's{i % 25}' for i in range(50)]
        design = design_from(columns, GROUPED_SCHEMA, 'y ~ x + (1 + x | s)')
        report = check_identifiability(design)
        # 2 fixed + 50 random + 3 covariance parameters
        assert report.n_parameters == 55
        assert not report.passed
        assert report.failures() == ['50 observations for 55 parameters']

    def test_no_group_with_full_rank_block(self):
        # within every subject the condition never varies
        columns = {'y': [0, 1] * 20, 'g': ['a'] * 20 + ['b'] * 20, 's': [f's{i // 4}' for i in range(40)]}
        design = design_from(columns, {'y': 'response', 'g': 'factor', 's': 'factor'}, 'y ~ g + (1 + g | s)')
        report = check_identifiability(design)
        assert report.observations_ok
        assert not report.passed
        assert "block 's'" in report.failures()[0]
        assert report.to_dict()['blocks'][0]['ok'] is False


def test_build_design_uses_given_scaling():
    dataset = dataset_from(_columns(), SCHEMA)
    spec = parse_formula('y ~ x')
    scaling = standardize(dataset, spec)
    half = dataset.take(np.arange(25))
    design = build_design(half, spec, scaling)
    assert_allclose(design.X[:, 0], (half['x'] - scaling['x'].center) / scaling['x'].divisor)
