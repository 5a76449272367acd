"""
Run configuration: an optional ``--config run.json`` overlaid by the flags actually given.

Config keys use the flag names with ``_`` for ``-`` (``adapt_delta``, ``prior_beta_scale``, ...).
Relative paths in a config file resolve against the file's directory.
"""
import argparse
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Any

from config import DEFAULT_SEED, OUTPUT_DIR
from errors import ConfigError, SepfitError
from models.priors import PriorConfig
from sampler.runner import SamplerConfig
from utils.io_utils import read_json

ENGINES = ('check', 'irls', 'laplace', 'nuts')
IRLS_GROUPS = ('unpooled', 'ignore')

SAMPLER_KEYS = {
    'chains': 'chains',
    'iter': 'iterations',
    'warmup': 'warmup',
    'adapt_delta': 'adapt_delta',
    'max_treedepth': 'max_depth',
    'max_delta_energy': 'max_delta_energy',
}
PRIOR_KEYS = {
    'prior_intercept_scale': 'intercept_scale',
    'prior_beta_scale': 'beta_scale',
    'prior_sd_scale': 'sd_scale',
    'lkj_eta': 'lkj_eta',
}
MLE_KEYS = ('tol', 'max_iter')
NUTS_ONLY = (*SAMPLER_KEYS, *PRIOR_KEYS, 'n_rep')
PATH_KEYS = ('data', 'schema', 'output')
GENERAL_KEYS = ('formula', 'data', 'schema', 'output', 'engine', 'seed', 'tree_depth', 'min_leaf')
KNOWN_KEYS = (*GENERAL_KEYS, *NUTS_ONLY, *MLE_KEYS, 'irls_groups', 'group')


@dataclass
class RunConfig:
    formula: str
    data: Path
    schema: Path
    engine: str = 'check'
    output: Path = OUTPUT_DIR
    seed: int = DEFAULT_SEED
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    priors: PriorConfig = field(default_factory=PriorConfig)
    irls_groups: str = 'unpooled'
    group: str | None = None
    tol: float | None = None
    max_iter: int | None = None
    tree_depth: int = 6
    min_leaf: int = 20
    n_rep: int = 500

    def validate(self) -> 'RunConfig':
        """
        Raises:
            ConfigError: bad engine or option, or a missing input file.
        """
        if self.engine not in ENGINES:
            raise ConfigError(f"engine must be one of {', '.join(ENGINES)}, got '{self.engine}'")
        if self.irls_groups not in IRLS_GROUPS:
            raise ConfigError(f"irls_groups must be one of {', '.join(IRLS_GROUPS)}, got '{self.irls_groups}'")
        if not self.formula:
            raise ConfigError('no formula given (--formula or "formula" in the config file)')
        for name in ('data', 'schema'):
            path = getattr(self, name)
            if path is None:
                raise ConfigError(f'no {name} file given (--{name})')
            if not Path(path).is_file():
                raise ConfigError(f'{name} file not found: {path}')
        if self.tree_depth < 1 or self.min_leaf < 1:
            raise ConfigError('tree depth and minimum leaf size must be at least 1', module='separation')
        if self.engine == 'nuts' and self.sampler.chains < 2:
            raise ConfigError(f'nuts needs at least 2 chains for split R-hat, got {self.sampler.chains}',
                              module='sampler')
        if self.n_rep < 1:
            raise ConfigError(f'n_rep must be at least 1, got {self.n_rep}', module='diagnostics')
        if self.tol is not None and not self.tol > 0:
            raise ConfigError(f'tolerance must be positive, got {self.tol}', module='mle')
        if self.max_iter is not None and self.max_iter < 1:
            raise ConfigError(f'max_iter must be at least 1, got {self.max_iter}', module='mle')
        return self

    def to_dict(self) -> dict:
        payload = asdict(self)
        payload.update(data=str(self.data), schema=str(self.schema), output=str(self.output))
        return payload


def _read_config(path: str | Path) -> dict[str, Any]:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f'config file not found: {path}')
    try:
        payload = read_json(path)
    except ValueError as e:
        raise ConfigError(f'config file {path} is not valid JSON: {e}') from None
    if not isinstance(payload, dict):
        raise ConfigError(f'config file {path} must hold a JSON object')
    unknown = sorted(set(payload) - set(KNOWN_KEYS))
    if unknown:
        raise ConfigError(f'unknown keys in {path}: {", ".join(unknown)}')
    for key in PATH_KEYS:
        if payload.get(key) is not None and not Path(payload[key]).is_absolute():
            payload[key] = str(path.parent / payload[key])
    return payload


def _check_engine_options(engine: str, values: dict[str, Any]):
    given = {key for key, value in values.items() if value is not None}
    misplaced = []
    if engine != 'nuts':
        misplaced += [key for key in NUTS_ONLY if key in given]
    if engine not in ('irls', 'laplace'):
        misplaced += [key for key in MLE_KEYS if key in given]
    if engine != 'irls' and 'irls_groups' in given:
        misplaced.append('irls_groups')
    if engine != 'laplace' and 'group' in given:
        misplaced.append('group')
    if misplaced:
        flags = ', '.join('--' + key.replace('_', '-') for key in misplaced)
        raise ConfigError(f'{flags} not accepted for engine {engine}')


def build_run_config(args: argparse.Namespace, engine: str | None = None) -> RunConfig:
    """
    Merge ``args`` over the optional config file. ``engine`` pins the engine (the ``check`` command).

    Raises:
        ConfigError: unreadable config, unknown key, option given for the wrong engine, invalid value.
    """
    values: dict[str, Any] = _read_config(args.config) if getattr(args, 'config', None) else {}
    for key in KNOWN_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    if engine is not None:
        if values.get('engine', engine) != engine:
            raise ConfigError(f"config engine '{values['engine']}' conflicts with the {engine} command")
        values['engine'] = engine
    engine = values.get('engine') or 'nuts'
    _check_engine_options(engine, values)

    seed = int(values['seed']) if values.get('seed') is not None else DEFAULT_SEED
    try:
        sampler = SamplerConfig(seed=seed, **{field_name: values[key] for key, field_name in SAMPLER_KEYS.items()
                                              if values.get(key) is not None})
        priors = PriorConfig(**{field_name: float(values[key]) for key, field_name in PRIOR_KEYS.items()
                                if values.get(key) is not None})
    except SepfitError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(f'invalid option value: {e}') from None

    output = values.get('output')
    optional = {key: values[key] for key in ('tol', 'max_iter', 'group') if values.get(key) is not None}
    config = RunConfig(
        formula=values.get('formula') or '',
        data=Path(values['data']) if values.get('data') else None,
        schema=Path(values['schema']) if values.get('schema') else None,
        engine=engine,
        output=Path(output) if output else OUTPUT_DIR / f'{engine}-{seed}',
        seed=seed,
        sampler=sampler,
        priors=priors,
        irls_groups=values.get('irls_groups') or 'unpooled',
        tree_depth=int(values.get('tree_depth') or 6),
        min_leaf=int(values.get('min_leaf') or 20),
        n_rep=int(values.get('n_rep') or 500),
        **optional,
    )
    return config.validate()
