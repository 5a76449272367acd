import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from diagnostics import effective_sample_size
from errors import AdaptationError, ConfigError, InitializationError
from sampler import (PhasePoint, SamplerConfig, adapt_warmup, chain_rng, leapfrog, metric_windows, nuts_transition,
                     run_chains)


class Gaussian:
    """Zero-mean normal with covariance ``cov``."""

    def __init__(self, cov):
        self.cov = np.atleast_2d(np.asarray(cov, dtype=float))
        self.precision = np.linalg.inv(self.cov)

    @property
    def dim(self) -> int:
        return self.cov.shape[0]

    def log_density_and_grad(self, theta):
        g = self.precision @ theta
        return -0.5 * float(theta @ g), -g


class Funnel:
    """v ~ N(0, 3^2), x_i | v ~ N(0, exp(v))."""

    def __init__(self, n: int = 9):
        self.n = n

    @property
    def dim(self) -> int:
        return self.n + 1

    def log_density_and_grad(self, theta):
        v, x = theta[0], theta[1:]
        scale = math.exp(v)
        value = -v * v / 18.0 - 0.5 * self.n * v - 0.5 * float(x @ x) / scale
        grad = np.empty_like(theta)
        grad[0] = -v / 9.0 - 0.5 * self.n + 0.5 * float(x @ x) / scale
        grad[1:] = -x / scale
        return value, grad


class Nowhere:
    dim = 3

    def log_density_and_grad(self, theta):
        return -math.inf, np.zeros(3)


class Cliff:
    """Standard normal on the plane theta[2] == 0, zero density off it."""
    dim = 4

    def log_density_and_grad(self, theta):
        if theta[2] != 0.0:
            return -math.inf, np.zeros(4)
        return -0.5 * float(theta @ theta), -theta


def _start(model, q) -> PhasePoint:
    q = np.asarray(q, dtype=float)
    logp, grad = model.log_density_and_grad(q)
    return PhasePoint(q, logp, grad)


def test_leapfrog_is_reversible():
    model = Gaussian([[1.0, 0.3], [0.3, 2.0]])
    point = _start(model, [0.4, -1.0]).with_momentum(np.array([0.7, 0.2]))
    inv_mass = np.array([1.0, 0.5])
    forward = point
    for _ in range(5):
        forward = leapfrog(forward, 0.1, inv_mass, model.log_density_and_grad)
    back = forward.with_momentum(-forward.p)
    for _ in range(5):
        back = leapfrog(back, 0.1, inv_mass, model.log_density_and_grad)
    assert_allclose(back.q, point.q, atol=1e-12)
    assert_allclose(-back.p, point.p, atol=1e-12)


def test_transition_stats():
    model = Gaussian(np.eye(3))
    state, stats = nuts_transition(_start(model, [0.1, 0.2, 0.3]), model.log_density_and_grad, 0.5, np.ones(3),
                                   np.random.default_rng(0), max_depth=4)
    assert 1 <= stats.treedepth <= 4
    assert 0.0 <= stats.accept_stat <= 1.0
    assert stats.n_leapfrog >= 1
    assert not stats.divergent
    assert state.logp == pytest.approx(model.log_density_and_grad(state.q)[0])


def test_max_depth_caps_the_tree():
    model = Gaussian(np.eye(2))
    _, stats = nuts_transition(_start(model, [1.0, 1.0]), model.log_density_and_grad, 1e-3, np.ones(2),
                               np.random.default_rng(1), max_depth=3)
    assert stats.treedepth == 3
    assert stats.n_leapfrog == 7


def test_funnel_neck_diverges():
    model = Funnel()
    state = _start(model, [-4.0] + [0.01] * model.n)
    rng = np.random.default_rng(2)
    divergent = 0
    for _ in range(30):
        state, stats = nuts_transition(state, model.log_density_and_grad, 1.0, np.ones(model.dim), rng)
        divergent += stats.divergent
    assert divergent > 0


def test_metric_windows():
    assert metric_windows(1000) == [(75, 100), (100, 150), (150, 250), (250, 450), (450, 950)]
    assert metric_windows(150) == [(75, 100)]
    with pytest.raises(AdaptationError):
        metric_windows(149)


def test_mass_matrix_learns_scales():
    model = Gaussian(np.diag([1.0, 100.0]))
    result = adapt_warmup(model.log_density_and_grad, _start(model, [0.5, 0.5]), 1000, chain_rng(3, 0))
    ratio = result.inv_mass[1] / result.inv_mass[0]
    assert 50 < ratio < 200


def test_higher_target_acceptance_shrinks_the_step():
    model = Gaussian(np.eye(5))
    start = _start(model, np.full(5, 0.3))
    loose = adapt_warmup(model.log_density_and_grad, start, 400, chain_rng(4, 0), adapt_delta=0.8)
    tight = adapt_warmup(model.log_density_and_grad, start, 400, chain_rng(4, 0), adapt_delta=0.99)
    assert tight.step_size < loose.step_size


def test_realized_acceptance_near_target():
    draws = run_chains(Gaussian(np.eye(4)), SamplerConfig(chains=1, iterations=1500, warmup=500, seed=5),
                       parallel=False)
    assert 0.7 <= draws.stats['accept_stat'].mean() <= 0.9


def test_correlated_normal():
    cov = [[1.0, 0.9], [0.9, 1.0]]
    draws = run_chains(Gaussian(cov), SamplerConfig(chains=2, iterations=2000, warmup=500, seed=6))
    flat = draws.draws.reshape(-1, 2)
    assert np.corrcoef(flat.T)[0, 1] == pytest.approx(0.9, abs=0.05)
    assert draws.divergent_count == 0


@pytest.mark.slow
def test_standard_normal_moments():
    draws = run_chains(Gaussian(np.eye(10)), SamplerConfig(chains=2, iterations=2500, warmup=500, seed=7))
    flat = draws.draws.reshape(-1, 10)
    assert flat.shape == (4000, 10)
    assert draws.divergent_count == 0
    assert 0.7 <= draws.stats['accept_stat'].mean() <= 0.9
    # within 4 Monte Carlo standard errors
    ess = effective_sample_size(draws.draws)
    assert np.all(np.abs(flat.mean(axis=0)) < 4 / np.sqrt(ess))
    assert np.all(np.abs(flat.var(axis=0) - 1.0) < 4 * np.sqrt(2 / ess))


def test_chains_are_deterministic_and_order_free():
    config = SamplerConfig(chains=3, iterations=300, warmup=150, seed=8)
    model = Gaussian(np.eye(2))
    threaded = run_chains(model, config, parallel=True)
    serial = run_chains(model, config, parallel=False)
    assert_array_equal(threaded.draws, serial.draws)
    assert_array_equal(threaded.stats['treedepth'], serial.stats['treedepth'])
    assert not np.array_equal(threaded.draws[0], threaded.draws[1])
    assert threaded.draws.shape == (3, 150, 2)
    assert threaded.names == ('theta[0]', 'theta[1]')


def test_chain_streams_are_keyed():
    a = chain_rng(11, 2).standard_normal(4)
    assert_array_equal(a, chain_rng(11, 2).standard_normal(4))
    assert not np.array_equal(a, chain_rng(11, 3).standard_normal(4))


def test_initialization_failure_names_the_offending_coordinate():
    with pytest.raises(InitializationError, match=r'worst coordinate theta\[2\]'):
        run_chains(Cliff(), SamplerConfig(chains=1, iterations=300, warmup=150), parallel=False)


def test_initialization_failure_without_a_culprit():
    with pytest.raises(InitializationError, match='no single coordinate'):
        run_chains(Nowhere(), SamplerConfig(chains=1, iterations=300, warmup=150), parallel=False)


def test_short_warmup_rejected():
    with pytest.raises(AdaptationError):
        run_chains(Gaussian(np.eye(2)), SamplerConfig(chains=1, iterations=300, warmup=100))


@pytest.mark.parametrize('kwargs', [
    {'chains': 0},
    {'iterations': 100, 'warmup': 100},
    {'adapt_delta': 1.0},
    {'max_depth': 0},
    {'max_delta_energy': 0.0},
    {'seed': -1},
])
def test_sampler_config_validation(kwargs):
    with pytest.raises(ConfigError):
        SamplerConfig(**kwargs)
