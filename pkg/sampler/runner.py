import math
from dataclasses import dataclass, field, asdict

import numpy as np
from tqdm import tqdm

from config import DEFAULT_SEED, PROGRESS
from errors import AdaptationError, ConfigError, InitializationError
from models.base import LogDensityModel
from utils.io_utils import map_ordered
from utils.lazy import Lazy
from utils.loggerext import LoggerExt
from .adaptation import MIN_WARMUP, adapt_warmup
from .nuts import NutsStats, PhasePoint, nuts_transition

STAT_COLUMNS = ('divergent', 'treedepth', 'accept_stat', 'energy', 'n_leapfrog', 'lp', 'stepsize')

INIT_RETRIES = 100
BLAME_DRAWS = 10


@dataclass(frozen=True)
class SamplerConfig:
    chains: int = 4
    iterations: int = 2000
    warmup: int = 1000
    adapt_delta: float = 0.8
    max_depth: int = 10
    max_delta_energy: float = 1000.0
    seed: int = DEFAULT_SEED
    init_radius: float = 2.0

    def __post_init__(self):
        if self.chains < 1:
            raise ConfigError(f'chains must be at least 1, got {self.chains}', module='sampler')
        if not 0 <= self.warmup < self.iterations:
            raise ConfigError(f'warmup ({self.warmup}) must be below iterations ({self.iterations})', module='sampler')
        if not 0 < self.adapt_delta < 1:
            raise ConfigError(f'adapt_delta must lie in (0, 1), got {self.adapt_delta}', module='sampler')
        if self.max_depth < 1:
            raise ConfigError(f'max tree depth must be at least 1, got {self.max_depth}', module='sampler')
        if not self.max_delta_energy > 0:
            raise ConfigError('divergence energy threshold must be positive', module='sampler')
        if self.seed < 0:
            raise ConfigError(f'seed must be non-negative, got {self.seed}', module='sampler')

    @property
    def draws(self) -> int:
        return self.iterations - self.warmup

    def to_dict(self) -> dict:
        return asdict(self)


def chain_rng(seed: int, chain: int) -> np.random.Generator:
    """Philox stream keyed by (seed, chain); the same chain gets the same stream whatever else runs."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(chain,))))


@dataclass
class ChainResult:
    chain: int
    draws: np.ndarray
    stats: dict[str, np.ndarray]
    step_size: float
    inv_mass: np.ndarray
    warmup_divergences: int


def _stats_arrays(stats: list[NutsStats]) -> dict[str, np.ndarray]:
    return {
        'divergent': np.array([s.divergent for s in stats], dtype=np.int64),
        'treedepth': np.array([s.treedepth for s in stats], dtype=np.int64),
        'accept_stat': np.array([s.accept_stat for s in stats], dtype=float),
        'energy': np.array([s.energy for s in stats], dtype=float),
        'n_leapfrog': np.array([s.n_leapfrog for s in stats], dtype=np.int64),
        'lp': np.array([s.lp for s in stats], dtype=float),
        'stepsize': np.array([s.stepsize for s in stats], dtype=float),
    }


class ChainRunner(LoggerExt):

    def __init__(self, model: LogDensityModel, config: SamplerConfig, chain: int, progress: bool = PROGRESS):
        super().__init__(log_tag=f'chain {chain}')
        self.model = model
        self.config = config
        self.chain = chain
        self.progress = progress

    def _coordinate_name(self, j: int) -> str:
        names = getattr(self.model, 'parameter_names', None)
        return names()[j] if callable(names) else f'theta[{j}]'

    def _evaluate(self, q: np.ndarray) -> tuple[float, np.ndarray]:
        try:
            logp, grad = self.model.log_density_and_grad(q)
        except (FloatingPointError, OverflowError, ValueError, np.linalg.LinAlgError):
            return -math.inf, np.full(self.model.dim, np.nan)
        return float(logp), np.asarray(grad, dtype=float)

    def _finite(self, q: np.ndarray) -> bool:
        logp, grad = self._evaluate(q)
        return math.isfinite(logp) and bool(np.all(np.isfinite(grad)))

    def _blame(self, failed: list[np.ndarray]) -> np.ndarray:
        """Per coordinate, how many failed draws stay non-finite with every other coordinate at zero."""
        counts = np.zeros(self.model.dim, dtype=np.int64)
        if not self._finite(np.zeros(self.model.dim)):
            return counts
        for q in failed[:BLAME_DRAWS]:
            for j in range(self.model.dim):
                point = np.zeros(self.model.dim)
                point[j] = q[j]
                counts[j] += not self._finite(point)
        return counts

    def initialize(self, rng: np.random.Generator) -> PhasePoint:
        """
        Raises:
            InitializationError: no finite log density in ``INIT_RETRIES`` uniform draws.
        """
        radius = self.config.init_radius
        bad = np.zeros(self.model.dim, dtype=np.int64)
        failed = []
        for attempt in range(1, INIT_RETRIES + 1):
            q = rng.uniform(-radius, radius, self.model.dim)
            logp, grad = self._evaluate(q)
            if math.isfinite(logp) and np.all(np.isfinite(grad)):
                if attempt > 1:
                    self.debug(f'initialized after {attempt} attempts')
                return PhasePoint(q, logp, grad)
            bad += ~np.isfinite(grad)
            failed.append(q)
        if not bad.any():
            bad = self._blame(failed)
        message = f'chain {self.chain}: log density not finite at any of {INIT_RETRIES} initial points'
        if not bad.any():
            raise InitializationError(f'{message}; no single coordinate could be identified')
        raise InitializationError(f'{message}; worst coordinate {self._coordinate_name(int(np.argmax(bad)))}')

    def run(self) -> ChainResult:
        cfg = self.config
        rng = chain_rng(cfg.seed, self.chain)
        logp_grad = self.model.log_density_and_grad
        state = self.initialize(rng)

        with tqdm(total=cfg.iterations, desc=f'chain {self.chain}', position=self.chain, leave=False,
                  disable=not self.progress) as bar:
            with self.timed('warmup'):
                warmup = adapt_warmup(logp_grad, state, cfg.warmup, rng, adapt_delta=cfg.adapt_delta,
                                      max_depth=cfg.max_depth, max_delta_energy=cfg.max_delta_energy,
                                      on_iteration=lambda t, s: bar.update(1))
            step, inv_mass, state = warmup.step_size, warmup.inv_mass, warmup.state
            self.debug(f'step size {step:.4g}, inverse metric range '
                       f'[{inv_mass.min():.3g}, {inv_mass.max():.3g}]')

            draws = np.empty((cfg.draws, self.model.dim))
            stats = []
            with self.timed('sampling'):
                for i in range(cfg.draws):
                    state, stat = nuts_transition(state, logp_grad, step, inv_mass, rng,
                                                  cfg.max_depth, cfg.max_delta_energy)
                    draws[i] = state.q
                    stats.append(stat)
                    bar.update(1)

        result = ChainResult(self.chain, draws, _stats_arrays(stats), step, inv_mass,
                             sum(s.divergent for s in warmup.stats))
        divergent = int(result.stats['divergent'].sum())
        accept = float(result.stats['accept_stat'].mean())
        log = self.warning if divergent else self.info
        log(f'{cfg.draws} draws, mean accept_stat {accept:.3f}, {divergent} divergent')
        return result


@dataclass(eq=False)
class PosteriorDraws:
    """
    Post-warmup draws in unconstrained coordinates, shape (chains, draws, dim), with per-draw sampler
    statistics of shape (chains, draws). The constrained view is computed on first access.
    """
    draws: np.ndarray
    names: tuple[str, ...]
    stats: dict[str, np.ndarray]
    step_sizes: np.ndarray
    inv_masses: np.ndarray
    max_depth: int
    model: LogDensityModel | None = field(default=None, repr=False)

    def __post_init__(self):
        self._constrained: Lazy[tuple[tuple[str, ...], np.ndarray]] = Lazy(self._constrain)

    @property
    def n_chains(self) -> int:
        return self.draws.shape[0]

    @property
    def n_draws(self) -> int:
        return self.draws.shape[1]

    @property
    def divergent_count(self) -> int:
        return int(self.stats['divergent'].sum())

    @property
    def treedepth_saturation(self) -> int:
        return int((self.stats['treedepth'] >= self.max_depth).sum())

    def _constrain(self) -> tuple[tuple[str, ...], np.ndarray]:
        constrain = getattr(self.model, 'constrain_draws', None)
        if constrain is None:
            return self.names, self.draws
        flat = constrain(self.draws.reshape(-1, self.draws.shape[2]))
        return tuple(self.model.constrained_names()), flat.reshape(self.n_chains, self.n_draws, -1)

    @property
    def constrained_names(self) -> tuple[str, ...]:
        return self._constrained()[0]

    @property
    def constrained(self) -> np.ndarray:
        """Draws on the constrained scale, shape (chains, draws, parameters)."""
        return self._constrained()[1]


def run_chains(model: LogDensityModel, config: SamplerConfig, *, parallel: bool = True,
               progress: bool = PROGRESS) -> PosteriorDraws:
    """
    Run ``config.chains`` independent chains. Results do not depend on ``parallel``: each chain owns
    its random stream.

    Raises:
        ConfigError: the model has no coordinates.
        AdaptationError: warmup shorter than the adaptation schedule.
        InitializationError: a chain found no finite starting point.
    """
    if model.dim < 1:
        raise ConfigError('posterior has no parameters', module='sampler')
    if config.warmup < MIN_WARMUP:
        raise AdaptationError(f'warmup of {config.warmup} iterations is shorter than the {MIN_WARMUP} '
                              f'the adaptation schedule needs')

    results = map_ordered(lambda chain: ChainRunner(model, config, chain, progress).run(),
                          range(config.chains), parallel=parallel)
    names_of = getattr(model, 'parameter_names', None)
    names = tuple(names_of()) if callable(names_of) else tuple(f'theta[{j}]' for j in range(model.dim))
    return PosteriorDraws(
        draws=np.stack([r.draws for r in results]),
        names=names,
        stats={key: np.stack([r.stats[key] for r in results]) for key in STAT_COLUMNS},
        step_sizes=np.array([r.step_size for r in results]),
        inv_masses=np.stack([r.inv_mass for r in results]),
        max_depth=config.max_depth,
        model=model,
    )
