"""
Warmup: dual-averaging step size and a diagonal inverse metric estimated over expanding windows.

Schedule: 75 step-size-only iterations, then metric windows of 25, 50, 100, ... (the last one
stretched to the terminal buffer), then 50 step-size-only iterations. After each metric window the
step size is re-initialized and dual averaging restarts.
"""
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from errors import AdaptationError
from .nuts import LogpGrad, NutsStats, PhasePoint, hamiltonian, leapfrog, nuts_transition

INIT_BUFFER = 75
TERM_BUFFER = 50
BASE_WINDOW = 25
MIN_WARMUP = INIT_BUFFER + BASE_WINDOW + TERM_BUFFER


class DualAveraging:

    def __init__(self, delta: float, gamma: float = 0.05, t0: float = 10.0, kappa: float = 0.75):
        self.delta = delta
        self.gamma = gamma
        self.t0 = t0
        self.kappa = kappa
        self.restart(1.0)

    def restart(self, step: float):
        self.mu = math.log(10.0 * step)
        self.s_bar = 0.0
        self.x_bar = 0.0
        self.counter = 0

    def learn(self, accept_stat: float) -> float:
        self.counter += 1
        accept_stat = min(1.0, accept_stat)
        eta = 1.0 / (self.counter + self.t0)
        self.s_bar = (1.0 - eta) * self.s_bar + eta * (self.delta - accept_stat)
        x = self.mu - self.s_bar * math.sqrt(self.counter) / self.gamma
        x_eta = self.counter ** -self.kappa
        self.x_bar = (1.0 - x_eta) * self.x_bar + x_eta * x
        return math.exp(x)

    @property
    def final_step(self) -> float:
        return math.exp(self.x_bar)


class WelfordVariance:

    def __init__(self, dim: int):
        self.n = 0
        self.mean = np.zeros(dim)
        self.m2 = np.zeros(dim)

    def add(self, x: np.ndarray):
        self.n += 1
        delta = x - self.mean
        self.mean += delta / self.n
        self.m2 += delta * (x - self.mean)

    def regularized(self) -> np.ndarray:
        """Sample variance shrunk towards 1e-3."""
        n = self.n
        variance = self.m2 / (n - 1)
        return (n / (n + 5.0)) * variance + 1e-3 * (5.0 / (n + 5.0))


def metric_windows(num_warmup: int) -> list[tuple[int, int]]:
    """Half-open ``[start, end)`` iteration ranges of the metric windows."""
    if num_warmup < MIN_WARMUP:
        raise AdaptationError(f'warmup of {num_warmup} iterations is shorter than the '
                              f'{MIN_WARMUP} the adaptation schedule needs')
    last = num_warmup - TERM_BUFFER
    windows = []
    start, size = INIT_BUFFER, BASE_WINDOW
    while start < last:
        end = start + size
        if end + 2 * size > last:
            end = last
        windows.append((start, end))
        start, size = end, size * 2
    return windows


def find_initial_step(point: PhasePoint, step: float, inv_mass: np.ndarray, logp_grad: LogpGrad,
                      rng: np.random.Generator, max_rounds: int = 100) -> float:
    """Double or halve ``step`` until one leapfrog step's acceptance crosses 0.5."""
    target = math.log(0.5)

    def delta_h(eps: float) -> float:
        z = point.with_momentum(rng.standard_normal(len(point.q)) / np.sqrt(inv_mass))
        h0 = hamiltonian(z, inv_mass)
        h = hamiltonian(leapfrog(z, eps, inv_mass, logp_grad), inv_mass)
        return h0 - h if math.isfinite(h) else -math.inf

    direction = 1 if delta_h(step) > target else -1
    for _ in range(max_rounds):
        candidate = step * 2.0 if direction == 1 else step * 0.5
        crossed = delta_h(candidate) <= target if direction == 1 else delta_h(candidate) >= target
        if crossed:
            return candidate if direction == -1 else step
        step = candidate
        if step > 1e7 or step < 1e-12:
            break
    return step


@dataclass
class WarmupResult:
    step_size: float
    inv_mass: np.ndarray
    state: PhasePoint
    stats: list[NutsStats] = field(default_factory=list)


def adapt_warmup(logp_grad: LogpGrad, state: PhasePoint, num_warmup: int, rng: np.random.Generator, *,
                 adapt_delta: float = 0.8, max_depth: int = 10, max_delta_energy: float = 1000.0,
                 on_iteration: Callable[[int, NutsStats], None] | None = None) -> WarmupResult:
    """
    Raises:
        AdaptationError: ``num_warmup`` is below the schedule's minimum.
    """
    windows = metric_windows(num_warmup)
    window_ends = {end - 1: start for start, end in windows}
    in_window = np.zeros(num_warmup, dtype=bool)
    for start, end in windows:
        in_window[start:end] = True

    dim = len(state.q)
    inv_mass = np.ones(dim)
    step = find_initial_step(state, 1.0, inv_mass, logp_grad, rng)
    averaging = DualAveraging(adapt_delta)
    averaging.restart(step)
    variance = WelfordVariance(dim)
    stats = []
    for t in range(num_warmup):
        state, stat = nuts_transition(state, logp_grad, step, inv_mass, rng, max_depth, max_delta_energy)
        stats.append(stat)
        step = averaging.learn(stat.accept_stat)
        if in_window[t]:
            variance.add(state.q)
        if t in window_ends:
            inv_mass = variance.regularized()
            variance = WelfordVariance(dim)
            step = find_initial_step(state, step, inv_mass, logp_grad, rng)
            averaging.restart(step)
        if on_iteration is not None:
            on_iteration(t, stat)
    return WarmupResult(averaging.final_step, inv_mass, state, stats)
