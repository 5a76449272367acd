"""
Split-chain potential scale reduction and effective sample size.

Both take draws shaped (chains, draws) or (chains, draws, parameters). Each chain is split in half
(the middle draw of an odd-length chain is dropped), so two chains give four half-chains.
"""
import logging
import math

import numpy as np
from scipy import fft

from errors import DiagnosticsError

_log = logging.getLogger(__name__)


def _as_3d(draws: np.ndarray) -> np.ndarray:
    draws = np.asarray(draws, dtype=float)
    if draws.ndim == 2:
        draws = draws[:, :, None]
    if draws.ndim != 3:
        raise DiagnosticsError(f'draws must be (chains, draws[, parameters]), got shape {draws.shape}')
    return draws


def split_chains(draws: np.ndarray) -> np.ndarray:
    """(chains, draws, k) -> (2 * chains, draws // 2, k)."""
    draws = _as_3d(draws)
    half = draws.shape[1] // 2
    return np.concatenate([draws[:, :half], draws[:, draws.shape[1] - half:]], axis=0)


def _check(draws: np.ndarray) -> np.ndarray:
    draws = _as_3d(draws)
    if draws.shape[0] < 2:
        raise DiagnosticsError(f'split R-hat and ESS need at least 2 chains, got {draws.shape[0]}')
    if draws.shape[1] < 8:
        raise DiagnosticsError(f'need at least 4 draws per half-chain, got {draws.shape[1]} per chain')
    return draws


def _warn_constant(constant: np.ndarray, names, what: str):
    if constant.any():
        labels = [names[j] if names is not None else str(j) for j in np.flatnonzero(constant)]
        _log.warning(f'{what}: constant parameters {labels[:10]}{" ..." if len(labels) > 10 else ""}; reported as NaN')


def split_rhat(draws: np.ndarray, names=None) -> np.ndarray:
    """
    Raises:
        DiagnosticsError: fewer than 2 chains or fewer than 8 draws per chain.
    """
    halves = split_chains(_check(draws))
    n = halves.shape[1]
    within = halves.var(axis=1, ddof=1).mean(axis=0)
    between = n * halves.mean(axis=1).var(axis=0, ddof=1)
    constant = ~(within > 0)
    with np.errstate(divide='ignore', invalid='ignore'):
        var_plus = (n - 1) / n * within + between / n
        rhat = np.sqrt(var_plus / within)
    rhat[constant] = np.nan
    _warn_constant(constant, names, 'R-hat')
    return rhat


def autocovariance(x: np.ndarray) -> np.ndarray:
    """Biased autocovariance along the last axis, by FFT."""
    n = x.shape[-1]
    centered = x - x.mean(axis=-1, keepdims=True)
    size = fft.next_fast_len(2 * n)
    spectrum = fft.rfft(centered, size, axis=-1)
    return fft.irfft(spectrum * np.conjugate(spectrum), size, axis=-1)[..., :n] / n


def _ess_one(chains: np.ndarray) -> float:
    """Geyer initial positive, monotone sequence over (chains, draws) of a single parameter."""
    m, n = chains.shape
    acov = autocovariance(chains)
    mean_var = acov[:, 0].mean() * n / (n - 1)
    var_plus = mean_var * (n - 1) / n
    if m > 1:
        var_plus += chains.mean(axis=1).var(ddof=1)
    if not var_plus > 0:
        return math.nan

    rho = np.zeros(n)
    rho[0] = 1.0
    rho_even = 1.0
    rho_odd = 1.0 - (mean_var - acov[:, 1].mean()) / var_plus
    rho[1] = rho_odd
    t = 1
    while t < n - 3 and rho_even + rho_odd > 0:
        rho_even = 1.0 - (mean_var - acov[:, t + 1].mean()) / var_plus
        rho_odd = 1.0 - (mean_var - acov[:, t + 2].mean()) / var_plus
        if rho_even + rho_odd >= 0:
            rho[t + 1] = rho_even
            rho[t + 2] = rho_odd
        t += 2
    max_t = t - 2
    if rho_odd > 0:
        rho[max_t + 1] = rho_odd

    # pairwise sums must not increase
    t = 1
    while t <= max_t - 2:
        if rho[t + 1] + rho[t + 2] > rho[t - 1] + rho[t]:
            rho[t + 1] = rho[t + 2] = 0.5 * (rho[t - 1] + rho[t])
        t += 2

    total = m * n
    tau = -1.0 + 2.0 * rho[:max_t + 1].sum() + rho[max_t + 1:max_t + 2].sum()
    tau = max(tau, 1.0 / math.log10(total))
    return total / tau


def effective_sample_size(draws: np.ndarray, names=None) -> np.ndarray:
    """
    Raises:
        DiagnosticsError: fewer than 2 chains or fewer than 8 draws per chain.
    """
    halves = split_chains(_check(draws))
    ess = np.array([_ess_one(halves[:, :, j]) for j in range(halves.shape[2])])
    _warn_constant(np.isnan(ess), names, 'ESS')
    return ess
