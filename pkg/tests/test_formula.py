import pytest
from hypothesis import given, settings, strategies as st

from data import ColumnSchema
from errors import FormulaError, SchemaError
from formula import DATASET1_FORMULA, DATASET2_FORMULA, Term, parse_formula, validate_spec


def terms(*labels):
    return tuple(Term(tuple(label.split(':'))) for label in labels)


def test_star_expands_to_mains_then_interaction():
    spec = parse_formula('y ~ a*b + (1 + a | subj)')
    assert spec.response == 'y'
    assert spec.fixed_terms == terms('a', 'b', 'a:b')
    assert len(spec.random_blocks) == 1
    block = spec.random_blocks[0]
    assert (block.group, block.has_intercept, block.slope_terms) == ('subj', True, terms('a'))


def test_two_block_design():
    spec = parse_formula('acc ~ order*cond + trial + (1 + cond | subj) + (1 + order | item)')
    assert spec.fixed_terms == terms('order', 'cond', 'order:cond', 'trial')
    assert spec.grouping_factors == ['subj', 'item']


def test_colon_is_pure_interaction():
    spec = parse_formula('y ~ a + a:b')
    assert spec.fixed_terms == terms('a', 'a:b')


def test_colon_binds_tighter_than_star():
    spec = parse_formula('y ~ a:b*c')
    assert spec.fixed_terms == terms('a:b', 'c', 'a:b:c')


def test_block_intercept_optional_and_removable():
    assert parse_formula('y ~ a + (a | s)').random_blocks[0].has_intercept
    block = parse_formula('y ~ a + (0 + a | s)').random_blocks[0]
    assert not block.has_intercept
    assert block.slope_terms == terms('a')


def test_intercept_only_model():
    spec = parse_formula('y ~ 1 + (1 | s)')
    assert spec.fixed_terms == ()
    assert spec.random_blocks[0].slope_terms == ()


@pytest.mark.parametrize('text, fragment', [
    ('y ~ a + a', 'duplicate term'),
    ('y ~ a*b + a:b', 'duplicate term'),
    ('y ~ a + y', 'right-hand side'),
    ('y ~ a + (0 | s)', 'empty'),
    ('y ~ a + (1 + b + b | s)', 'duplicate slope'),
    ('y ~ a + (1 | s) + (b | s)', 'two random blocks'),
    ('y ~ 0 + a', 'cannot be removed'),
    ('y ~ a +', 'expected a column name'),
    ('', 'empty'),
    ('y ~ (1 | s)', 'must start with a fixed term'),
    ('y ~ (1 | s) + a', 'must start with a fixed term'),
])
def test_rejections(text, fragment):
    with pytest.raises(FormulaError, match=fragment):
        parse_formula(text)


def test_syntax_error_reports_byte_offset():
    with pytest.raises(FormulaError) as info:
        parse_formula('y ~ a + $')
    assert info.value.offset == 8
    with pytest.raises(FormulaError) as info:
        parse_formula('y ~　a + $')
    # ideographic space is three bytes in UTF-8
    assert info.value.offset == 10


def test_leading_block_error_points_at_the_block():
    with pytest.raises(FormulaError) as info:
        parse_formula('y ~ (1 + a | s) + a')
    assert info.value.offset == 4
    assert parse_formula('y ~ 1 + (1 + a | s) + a').fixed_terms == terms('a')


@given(st.integers(min_value=1, max_value=5))
def test_star_chain_yields_all_subsets(n):
    names = [f'v{i}' for i in range(n)]
    spec = parse_formula('y ~ ' + '*'.join(names))
    assert len(spec.fixed_terms) == 2 ** n - 1
    assert len({t.key for t in spec.fixed_terms}) == 2 ** n - 1
    orders = [t.order for t in spec.fixed_terms]
    assert orders == sorted(orders)


_names = st.sampled_from(['a', 'b', 'c', 'd', 'e.x', 'f_1'])
_interaction = st.lists(_names, min_size=1, max_size=2, unique=True).map(':'.join)
_term_expr = st.lists(_interaction, min_size=1, max_size=2).map('*'.join)
_block = st.tuples(st.booleans(), st.lists(_term_expr, max_size=2), st.sampled_from(['g', 'h'])).map(
    lambda t: f"({'1' if t[0] or not t[1] else '0'}{''.join(' + ' + e for e in t[1])} | {t[2]})")


@settings(max_examples=200)
@given(st.lists(_term_expr, min_size=1, max_size=3), st.lists(_block, max_size=2, unique_by=lambda b: b[-2]))
def test_pretty_print_round_trip(exprs, blocks):
    text = 'y ~ ' + ' + '.join(exprs + blocks)
    try:
        spec = parse_formula(text)
    except FormulaError:
        return  # generated duplicates
    assert parse_formula(spec.pretty()) == spec


def _schema(**columns):
    return ColumnSchema.from_dict(columns)


def test_validate_unknown_column():
    schema = _schema(y='response', a='covariate')
    with pytest.raises(SchemaError, match="unknown column 'f0'"):
        validate_spec(parse_formula('y ~ a + f0'), schema)


def test_validate_response_must_be_binary():
    schema = _schema(y={'kind': 'response', 'levels': ['lo', 'mid', 'hi']}, a='covariate')
    with pytest.raises(SchemaError, match='not binary'):
        validate_spec(parse_formula('y ~ a'), schema)


def test_validate_ordered_self_interaction():
    schema = _schema(y='response', o={'kind': 'ordered', 'levels': ['1', '2', '3']})
    with pytest.raises(SchemaError, match="ordered factor 'o' interacts with itself"):
        validate_spec(parse_formula('y ~ o:o'), schema)


def test_validate_grouping_factor_kind():
    schema = _schema(y='response', a='covariate', s='covariate')
    with pytest.raises(SchemaError, match='unordered factor'):
        validate_spec(parse_formula('y ~ a + (1 | s)'), schema)


def test_reconstructed_designs_validate():
    binary = {'kind': 'factor', 'levels': ['no', 'yes']}
    schema2 = _schema(
        marked='response', stress=binary, function_word=binary, left_marked=binary, right_marked=binary,
        prev_syllable_marked=binary, instructions={'kind': 'factor', 'levels': ['naive', 'informed']},
        f0='covariate', intensity='covariate', duration='covariate',
        subject={'kind': 'factor'}, item={'kind': 'factor'})
    spec2 = parse_formula(DATASET2_FORMULA)
    validate_spec(spec2, schema2)
    assert len(spec2.fixed_variables) == 9
    assert sum(t.order > 1 for t in spec2.fixed_terms) == 4

    spec1 = parse_formula(DATASET1_FORMULA)
    assert spec1.grouping_factors == ['participant', 'item']
    assert Term(('task_order', 'trial_type', 'condition')) in spec1.fixed_terms
