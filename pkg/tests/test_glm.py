import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.optimize import minimize
from scipy.special import logit

from conftest import counts_design, design_from
from data import DesignMatrices
from data.design import INTERCEPT
from errors import MleError
from models import DivergenceVerdict, detect_mle_divergence, fit_glm_irls
from models.base import full_design_matrix
from models.glm import log_likelihood


def _intercept_only(ones: int, zeros: int) -> DesignMatrices:
    return design_from({'y': [1] * ones + [0] * zeros}, {'y': 'response'}, 'y ~ 1')


@pytest.mark.parametrize('ones, zeros, expected', [(30, 30, 0.0), (45, 15, np.log(3.0))])
def test_intercept_is_logit_of_proportion(ones, zeros, expected):
    fit = fit_glm_irls(_intercept_only(ones, zeros))
    assert fit.converged
    assert fit.names == (INTERCEPT,)
    assert fit.coefficients[0] == pytest.approx(expected, abs=1e-10)


def test_separation_diverges():
    fit = fit_glm_irls(counts_design(20, 0))
    assert not fit.converged
    assert abs(fit.coefficients[1]) > 8
    assert np.all(np.diff(fit.trajectory[-10:]) > 0)
    assert detect_mle_divergence(fit) is DivergenceVerdict.DIVERGING


def test_overlap_converges_to_cell_logits():
    fit = fit_glm_irls(counts_design(20, 16, n=25))
    assert detect_mle_divergence(fit) is DivergenceVerdict.CONVERGED
    b0, b1 = fit.coefficients
    # +0.5 codes level A
    assert b0 + 0.5 * b1 == pytest.approx(logit(0.8), abs=1e-8)
    assert b0 - 0.5 * b1 == pytest.approx(logit(0.64), abs=1e-8)
    assert np.all(fit.standard_errors > 0)


def test_iteration_limit_stalls():
    fit = fit_glm_irls(counts_design(20, 16, n=25), max_iter=3, tol=1e-14)
    assert fit.iterations == 3
    assert detect_mle_divergence(fit) is DivergenceVerdict.STALLED
    assert 'iteration limit' in fit.message


def _random_design(rng, n=300):
    x1 = rng.normal(size=n)
    x2 = rng.uniform(0, 10, size=n)
    g = rng.choice(['a', 'b', 'c'], n)
    eta = 0.3 + 0.8 * x1 - 0.1 * x2 + np.where(g == 'a', 0.5, 0.0)
    y = (rng.uniform(size=n) < 1 / (1 + np.exp(-eta))).astype(int)
    return design_from({'y': y, 'x1': x1, 'x2': x2, 'g': g},
                       {'y': 'response', 'x1': 'covariate', 'x2': 'covariate', 'g': 'factor'},
                       'y ~ x1*x2 + g')


def test_matches_general_optimizer(rng):
    design = _random_design(rng)
    fit = fit_glm_irls(design)
    assert fit.converged
    A = full_design_matrix(design)
    y = design.y

    def objective(beta):
        eta = A @ beta
        return -log_likelihood(A, y, beta), -(A.T @ (y - 1 / (1 + np.exp(-eta))))

    result = minimize(objective, np.zeros(A.shape[1]), jac=True, method='BFGS', options={'gtol': 1e-11})
    assert_allclose(fit.coefficients, result.x, atol=1e-6)


def test_log_likelihood_never_decreases(rng):
    fit = fit_glm_irls(_random_design(rng))
    assert np.all(np.diff(fit.log_likelihood_path) >= -1e-9)
    assert fit.log_likelihood == pytest.approx(fit.log_likelihood_path[-1])


def test_rank_deficient_design():
    x = np.linspace(-1, 1, 20)
    design = DesignMatrices(np.tile([0, 1], 10), np.column_stack([x, 2 * x]), ('x', 'x2'))
    with pytest.raises(MleError, match='rank deficient'):
        fit_glm_irls(design)


def test_random_blocks_are_ignored():
    columns = {'y': [0, 1, 1, 0, 1, 0, 0, 1], 'x': [1, 2, 3, 4, 5, 6, 7, 8], 's': list('aabbccdd')}
    schema = {'y': 'response', 'x': 'covariate', 's': 'factor'}
    grouped = design_from(columns, schema, 'y ~ x + (1 | s)')
    flat = design_from(columns, schema, 'y ~ x')
    assert_allclose(fit_glm_irls(grouped).coefficients, fit_glm_irls(flat).coefficients)


def test_unpooled_design_quasi_separation_diverges():
    # subject s2 answers correctly on every trial
    y = [1, 0, 1, 0, 1, 1, 1, 1, 1, 1, 1, 1, 0, 1, 0, 0, 1, 0]
    subject = ['s1'] * 6 + ['s2'] * 6 + ['s3'] * 6
    dataset_design = design_from({'y': y, 's': subject}, {'y': 'response', 's': 'factor'}, 'y ~ 1 + (1 | s)')
    fit = fit_glm_irls(dataset_design.unpooled())
    assert detect_mle_divergence(fit) is DivergenceVerdict.DIVERGING


def test_to_dict_carries_trajectory():
    fit = fit_glm_irls(counts_design(20, 0))
    payload = fit.to_dict()
    assert payload['engine'] == 'irls'
    assert payload['converged'] is False
    assert len(payload['trajectory']) == fit.iterations
    assert set(payload['coefficients']) == {INTERCEPT, 'g[A]'}


def test_fitter_arguments_validated():
    with pytest.raises(ValueError):
        fit_glm_irls(counts_design(20, 16), tol=0)
    with pytest.raises(ValueError):
        fit_glm_irls(counts_design(20, 16), max_iter=0)
