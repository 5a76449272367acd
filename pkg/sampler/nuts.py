"""
One No-U-Turn transition with a diagonal metric.

The trajectory doubles in a random direction until the generalized U-turn criterion fails on the
whole trajectory or on any subtree, or the maximum depth is reached. The next state is drawn
multinomially: within subtrees uniformly by weight, and at the top level biased towards the newest
subtree. A leapfrog step whose energy error exceeds ``max_delta_energy`` is divergent and stops the
trajectory.
"""
import math
from dataclasses import dataclass, asdict
from typing import Callable

import numpy as np

LogpGrad = Callable[[np.ndarray], tuple[float, np.ndarray]]


@dataclass(frozen=True, eq=False)
class PhasePoint:
    q: np.ndarray
    logp: float
    grad: np.ndarray
    p: np.ndarray | None = None

    def with_momentum(self, p: np.ndarray) -> 'PhasePoint':
        return PhasePoint(self.q, self.logp, self.grad, p)


@dataclass(frozen=True)
class NutsStats:
    accept_stat: float
    treedepth: int
    n_leapfrog: int
    divergent: bool
    energy: float
    lp: float
    stepsize: float

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate(logp_grad: LogpGrad, q: np.ndarray) -> tuple[float, np.ndarray]:
    """Non-finite densities become ``-inf`` with a zero gradient so trajectories stop cleanly."""
    try:
        logp, grad = logp_grad(q)
    except (FloatingPointError, OverflowError, ValueError, np.linalg.LinAlgError):
        return -math.inf, np.zeros_like(q)
    logp = float(logp)
    if not math.isfinite(logp) or not np.all(np.isfinite(grad)):
        return -math.inf, np.zeros_like(q)
    return logp, np.asarray(grad, dtype=float)


def leapfrog(point: PhasePoint, step: float, inv_mass: np.ndarray, logp_grad: LogpGrad) -> PhasePoint:
    p_half = point.p + 0.5 * step * point.grad
    q = point.q + step * inv_mass * p_half
    logp, grad = evaluate(logp_grad, q)
    return PhasePoint(q, logp, grad, p_half + 0.5 * step * grad)


def hamiltonian(point: PhasePoint, inv_mass: np.ndarray) -> float:
    h = -point.logp + 0.5 * float(np.dot(point.p, inv_mass * point.p))
    return h if math.isfinite(h) else math.inf


def _no_u_turn(p_sharp_minus: np.ndarray, p_sharp_plus: np.ndarray, rho: np.ndarray) -> bool:
    return float(np.dot(p_sharp_plus, rho)) > 0 and float(np.dot(p_sharp_minus, rho)) > 0


@dataclass(eq=False)
class _Subtree:
    valid: bool
    end: PhasePoint | None = None
    propose: PhasePoint | None = None
    log_sum_weight: float = -math.inf
    rho: np.ndarray | None = None
    p_beg: np.ndarray | None = None
    p_end: np.ndarray | None = None


class _Trajectory:
    """Mutable bookkeeping shared by every leaf of one transition."""

    def __init__(self, logp_grad: LogpGrad, step: float, inv_mass: np.ndarray, h0: float,
                 max_delta_energy: float, rng: np.random.Generator):
        self.logp_grad = logp_grad
        self.step = step
        self.inv_mass = inv_mass
        self.h0 = h0
        self.max_delta_energy = max_delta_energy
        self.rng = rng
        self.n_leapfrog = 0
        self.sum_metro_prob = 0.0
        self.divergent = False

    def build(self, start: PhasePoint, depth: int, direction: int) -> _Subtree:
        if depth == 0:
            point = leapfrog(start, direction * self.step, self.inv_mass, self.logp_grad)
            self.n_leapfrog += 1
            h = hamiltonian(point, self.inv_mass)
            if h - self.h0 > self.max_delta_energy:
                self.divergent = True
            log_weight = self.h0 - h
            self.sum_metro_prob += 1.0 if log_weight > 0 else math.exp(log_weight)
            return _Subtree(not self.divergent, point, point, log_weight, point.p.copy(), point.p, point.p)

        init = self.build(start, depth - 1, direction)
        if not init.valid:
            return _Subtree(False)
        final = self.build(init.end, depth - 1, direction)
        if not final.valid:
            return _Subtree(False)

        log_sum_weight = float(np.logaddexp(init.log_sum_weight, final.log_sum_weight))
        propose = init.propose
        if self.rng.uniform() < math.exp(final.log_sum_weight - log_sum_weight):
            propose = final.propose

        rho = init.rho + final.rho
        m = self.inv_mass
        persist = (_no_u_turn(m * init.p_beg, m * final.p_end, rho)
                   and _no_u_turn(m * init.p_beg, m * final.p_beg, init.rho + final.p_beg)
                   and _no_u_turn(m * init.p_end, m * final.p_end, final.rho + init.p_end))
        return _Subtree(persist, final.end, propose, log_sum_weight, rho, init.p_beg, final.p_end)


def nuts_transition(state: PhasePoint, logp_grad: LogpGrad, step_size: float, inv_mass: np.ndarray,
                    rng: np.random.Generator, max_depth: int = 10,
                    max_delta_energy: float = 1000.0) -> tuple[PhasePoint, NutsStats]:
    """``state`` needs ``q``, ``logp`` and ``grad``; a fresh momentum is drawn here."""
    p0 = rng.standard_normal(len(state.q)) / np.sqrt(inv_mass)
    z0 = state.with_momentum(p0)
    h0 = hamiltonian(z0, inv_mass)
    trajectory = _Trajectory(logp_grad, step_size, inv_mass, h0, max_delta_energy, rng)

    fwd = bck = sample = z0
    p_fwd = p_bck = p0
    rho = p0.copy()
    log_sum_weight = 0.0
    depth = 0
    m = inv_mass
    while depth < max_depth:
        if rng.uniform() > 0.5:
            sub = trajectory.build(fwd, depth, 1)
            if not sub.valid:
                break
            fwd = sub.end
            persist = (_no_u_turn(m * p_bck, m * sub.p_end, rho + sub.rho)
                       and _no_u_turn(m * p_bck, m * sub.p_beg, rho + sub.p_beg)
                       and _no_u_turn(m * p_fwd, m * sub.p_end, sub.rho + p_fwd))
            p_fwd = sub.p_end
        else:
            sub = trajectory.build(bck, depth, -1)
            if not sub.valid:
                break
            bck = sub.end
            persist = (_no_u_turn(m * sub.p_end, m * p_fwd, rho + sub.rho)
                       and _no_u_turn(m * sub.p_end, m * p_bck, sub.rho + p_bck)
                       and _no_u_turn(m * sub.p_beg, m * p_fwd, rho + sub.p_beg))
            p_bck = sub.p_end
        depth += 1

        if sub.log_sum_weight > log_sum_weight or rng.uniform() < math.exp(sub.log_sum_weight - log_sum_weight):
            sample = sub.propose
        log_sum_weight = float(np.logaddexp(log_sum_weight, sub.log_sum_weight))
        rho = rho + sub.rho
        if not persist:
            break

    n_leapfrog = max(trajectory.n_leapfrog, 1)
    stats = NutsStats(
        accept_stat=trajectory.sum_metro_prob / n_leapfrog,
        treedepth=depth,
        n_leapfrog=trajectory.n_leapfrog,
        divergent=trajectory.divergent,
        energy=hamiltonian(sample, inv_mass),
        lp=sample.logp,
        stepsize=step_size,
    )
    return PhasePoint(sample.q, sample.logp, sample.grad), stats
