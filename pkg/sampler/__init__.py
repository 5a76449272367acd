from .adaptation import DualAveraging, WarmupResult, adapt_warmup, find_initial_step, metric_windows
from .nuts import NutsStats, PhasePoint, leapfrog, nuts_transition
from .runner import SamplerConfig, ChainRunner, PosteriorDraws, chain_rng, run_chains

__all__ = [
    'DualAveraging', 'WarmupResult', 'adapt_warmup', 'find_initial_step', 'metric_windows',
    'NutsStats', 'PhasePoint', 'leapfrog', 'nuts_transition',
    'SamplerConfig', 'ChainRunner', 'PosteriorDraws', 'chain_rng', 'run_chains',
]
