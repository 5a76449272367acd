import json

import numpy as np
import pytest

from cli.main import main
from cli.simulate import SimScenario, draw_dataset, simulate_dataset
from errors import ScenarioError


def test_zero_truth_gives_even_odds():
    scenario = SimScenario.from_dict({
        'formula': 'y ~ x + (1 | subj)',
        'n': 4000,
        'groups': {'subj': 40},
        'predictors': {'x': {'kind': 'covariate'}},
    })
    simulated = draw_dataset(scenario, seed=1)
    assert simulated.truth['success_proportion'] == pytest.approx(0.5, abs=0.03)
    assert simulated.truth['beta'] == {'x': 0.0}
    assert set(simulated.frame.columns) == {'y', 'subj', 'x'}


def test_levels_are_balanced_and_crossed(grouped_scenario):
    frame = draw_dataset(SimScenario.from_dict(grouped_scenario), seed=2).frame
    counts = frame.groupby(['subj', 'cond']).size()
    assert len(counts) == 40
    assert set(counts) == {50}
    assert frame['subj'].iloc[0] == 'subj01'


def test_injection_forces_a_pure_cell(grouped_scenario):
    scenario = SimScenario.from_dict(grouped_scenario | {
        'injections': [{'where': {'subj': ['subj03'], 'cond': 'b'}, 'y': 1}],
    })
    simulated = draw_dataset(scenario, seed=3)
    frame = simulated.frame
    cell = frame[(frame['subj'] == 'subj03') & (frame['cond'] == 'b')]
    assert len(cell) == 50
    assert (cell['y'] == 1).all()
    assert simulated.truth['forced_rows'] == 50
    others = frame[frame['subj'] != 'subj03']['y']
    assert 0 < others.mean() < 1


def test_truth_carries_design_scale_coefficients(grouped_scenario):
    truth = draw_dataset(SimScenario.from_dict(grouped_scenario), seed=4).truth
    assert truth['beta'] == {'x': 0.8, 'cond[a]': -0.4}
    assert set(truth['random_effects']['subj']) == {f'subj{i:02d}' for i in range(1, 21)}
    assert truth['formula'] == 'y ~ x + cond + (1 + cond | subj)'


def test_same_seed_same_bytes(grouped_scenario, tmp_path):
    scenario = SimScenario.from_dict(grouped_scenario)
    first = simulate_dataset(scenario, 7, tmp_path / 'a')
    second = simulate_dataset(scenario, 7, tmp_path / 'b')
    other = simulate_dataset(scenario, 8, tmp_path / 'c')
    assert [p.name for p in first] == ['data.csv', 'schema.json', 'truth.json']
    for a, b in zip(first, second):
        assert a.read_bytes() == b.read_bytes()
    assert first[0].read_bytes() != other[0].read_bytes()


def test_simulate_command(grouped_scenario, tmp_path):
    path = tmp_path / 'scenario.json'
    path.write_text(json.dumps(grouped_scenario), encoding='utf-8')
    assert main(['simulate', str(path), '--output', str(tmp_path / 'sim'), '--seed', '5']) == 0
    schema = json.loads((tmp_path / 'sim' / 'schema.json').read_text(encoding='utf-8'))
    assert schema['y']['kind'] == 'response'
    assert schema['subj']['kind'] == 'factor'


def test_index_covariate_counts_trials():
    scenario = SimScenario.from_dict({
        'formula': 'y ~ trial + (1 | subj)',
        'n': 30,
        'groups': {'subj': 3},
        'predictors': {'trial': {'kind': 'covariate', 'distribution': 'index'}},
    })
    frame = draw_dataset(scenario, seed=6).frame
    np.testing.assert_array_equal(frame['trial'].to_numpy()[:6], [1, 1, 1, 2, 2, 2])
    assert frame['trial'].max() == 10


@pytest.mark.parametrize('change, match', [
    ({'beta': {'nope': 1.0}}, 'unknown design columns'),
    ({'sigma': {'subj': [0.7]}}, "block 'subj'"),
    ({'correlation': {'subj': [[1.0, 1.2], [1.2, 1.0]]}}, 'positive definite'),
    ({'groups': {}}, 'grouping factor'),
    ({'n': 0}, 'n must be'),
    ({'injections': [{'where': {'subj': ['subj01']}, 'y': 1}, {'where': {'cond': ['a']}, 'y': 0}]},
     'same rows'),
    ({'injections': [{'where': {'subj': ['subj99']}, 'y': 1}]}, 'unknown levels'),
])
def test_scenario_errors(grouped_scenario, change, match):
    with pytest.raises(ScenarioError, match=match):
        draw_dataset(SimScenario.from_dict(grouped_scenario | change), seed=1)


def test_missing_scenario_file(tmp_path):
    assert main(['simulate', str(tmp_path / 'none.json'), '--output', str(tmp_path / 'sim')]) == 1
