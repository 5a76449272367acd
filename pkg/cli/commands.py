import platform
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd
import scipy

from config import PROGRESS
from data import DesignMatrices, Dataset, ColumnSchema, build_design, check_identifiability, load_csv, standardize
from data.identifiability import IdentifiabilityReport
from diagnostics import export_run, posterior_predictive, summarize
from errors import IdentifiabilityError
from formula import ModelSpec, parse_formula, validate_spec
from models import BayesianLogitModel, DivergenceVerdict, Engines, detect_mle_divergence, fit_glmm_laplace
from sampler import chain_rng, run_chains
from separation import SeparationReport, scan_dataset
from utils import logcfg
from utils.io_utils import file_digest, write_json
from utils.loggerext import LoggerExt
from .runconfig import RunConfig

EXIT_OK = 0
EXIT_VERDICT_FAILED = 5


@dataclass(frozen=True, eq=False)
class Prepared:
    spec: ModelSpec
    schema: ColumnSchema
    dataset: Dataset
    design: DesignMatrices | None = None


def versions() -> dict[str, str]:
    return {
        'python': platform.python_version(),
        'numpy': np.__version__,
        'scipy': scipy.__version__,
        'pandas': pd.__version__,
    }


class Run(LoggerExt):
    """One ``check`` or ``fit`` invocation writing into ``config.output``."""

    def __init__(self, config: RunConfig):
        super().__init__(log_tag=config.engine)
        self.config = config
        self.out = Path(config.output)
        self.written: list[Path] = []

    def write(self, relative: str, payload) -> Path:
        path = write_json(self.out / relative, payload)
        self.written.append(path)
        return path

    def prepare(self, with_design: bool) -> Prepared:
        cfg = self.config
        schema = ColumnSchema.from_json(cfg.schema)
        spec = parse_formula(cfg.formula)
        validate_spec(spec, schema)
        dataset = load_csv(cfg.data, schema, spec.columns)
        design = build_design(dataset, spec, standardize(dataset, spec)) if with_design else None
        return Prepared(spec, schema, dataset, design)

    def separation(self, prepared: Prepared) -> SeparationReport:
        cfg = self.config
        report = scan_dataset(prepared.dataset, prepared.spec, tree_depth=cfg.tree_depth, min_leaf=cfg.min_leaf)
        self.write('separation.json', report.to_dict())
        return report

    def identifiability(self, design: DesignMatrices) -> IdentifiabilityReport:
        report = check_identifiability(design)
        self.write('identifiability.json', report.to_dict())
        return report

    def manifest(self, prepared: Prepared | None, exit_code: int):
        cfg = self.config
        payload = {
            'config': cfg.to_dict(),
            'formula': prepared.spec.pretty() if prepared is not None else cfg.formula,
            'seed': cfg.seed,
            'versions': versions(),
            'inputs': {
                'data': {'path': str(cfg.data), 'sha256': file_digest(cfg.data)},
                'schema': {'path': str(cfg.schema), 'sha256': file_digest(cfg.schema)},
            },
            'rows': {'used': prepared.dataset.n, 'dropped': prepared.dataset.dropped} if prepared else None,
            'exit_code': exit_code,
            'outputs': sorted(str(p.relative_to(self.out)) for p in self.written),
        }
        write_json(self.out / 'manifest.json', payload)

    def check(self) -> int:
        prepared = self.prepare(with_design=False)
        report = self.separation(prepared)
        print(report.render())
        self.manifest(prepared, EXIT_OK)
        return EXIT_OK

    def fit(self) -> int:
        cfg = self.config
        prepared = self.prepare(with_design=True)
        design = prepared.design
        identifiability = self.identifiability(design)
        separation = self.separation(prepared)
        if separation.verdict.severity:
            self.warning(f'separation scan: {separation.verdict.value}')
        if not identifiability.passed:
            self.manifest(prepared, IdentifiabilityError.exit_code)
            raise IdentifiabilityError('model not identifiable: ' + '; '.join(identifiability.failures()))

        engine = {'irls': self.fit_irls, 'laplace': self.fit_laplace, 'nuts': self.fit_nuts}[cfg.engine]
        exit_code = engine(prepared)
        self.manifest(prepared, exit_code)
        return exit_code

    def _mle_options(self) -> dict:
        cfg = self.config
        return {k: v for k, v in (('tol', cfg.tol), ('max_iter', cfg.max_iter)) if v is not None}

    def fit_irls(self, prepared: Prepared) -> int:
        design = prepared.design
        if self.config.irls_groups == 'unpooled' and design.blocks:
            design = design.unpooled()
        fit = Engines.get_by_name('irls')(**self._mle_options()).fit(design)
        verdict = detect_mle_divergence(fit)
        self.write('fit/summary.json', {**fit.to_dict(), 'verdict': verdict.value,
                                        'scaling': design.scaling.to_dict() if design.scaling else None})
        print(f'irls: {verdict.value} after {fit.iterations} iterations, max |beta| {fit.max_abs_coefficient:.3g}')
        return EXIT_OK if verdict is DivergenceVerdict.CONVERGED else EXIT_VERDICT_FAILED

    def fit_laplace(self, prepared: Prepared) -> int:
        fit = fit_glmm_laplace(prepared.design, group=self.config.group, **self._mle_options())
        verdict = 'converged' if fit.converged else 'not converged'
        self.write('fit/summary.json', {**fit.to_dict(), 'verdict': verdict,
                                        'scaling': prepared.design.scaling.to_dict()})
        print(f'laplace: {verdict}, sigma {fit.sigma:.4g}{" (boundary)" if fit.boundary else ""}, '
              f'max |beta| {fit.max_abs_coefficient:.3g}')
        return EXIT_OK if fit.converged else EXIT_VERDICT_FAILED

    def fit_nuts(self, prepared: Prepared) -> int:
        cfg = self.config
        design = prepared.design
        model = BayesianLogitModel(design, cfg.priors)
        self.info(f'{model.dim} unconstrained coordinates, {cfg.sampler.chains} chains x '
                  f'{cfg.sampler.iterations} iterations ({cfg.sampler.warmup} warmup)')
        draws = run_chains(model, cfg.sampler, progress=PROGRESS)
        summary = summarize(draws, design.scaling, dict(zip(design.column_names, design.column_terms)),
                            priors=cfg.priors.summary())
        # one stream past the chain streams
        ppc = posterior_predictive(draws, design, chain_rng(cfg.seed, cfg.sampler.chains),
                                   min(cfg.n_rep, draws.n_chains * draws.n_draws))
        self.written += export_run(self.out, draws, ppc)
        self.write('fit/summary.json', {
            **summary.to_dict(),
            'ppc': ppc.to_dict(),
            'sampler_config': cfg.sampler.to_dict(),
            'scaling': design.scaling.to_dict(),
        })
        print(summary.render())
        return EXIT_OK if summary.passed else EXIT_VERDICT_FAILED


def _execute(config: RunConfig, action: str) -> int:
    run = Run(config)
    handler = logcfg.attach_run_log(run.out)
    try:
        with run.timed(action):
            return getattr(run, action)()
    finally:
        logcfg.detach_run_log(handler)
        sys.stdout.flush()


def cmd_check(config: RunConfig) -> int:
    """Separation scan and tree; detection is reported, never an error. Exit 0."""
    return _execute(config, 'check')


def cmd_fit(config: RunConfig) -> int:
    """
    Identifiability and separation reports, then the chosen engine.

    Returns:
        0 on a passing verdict, 5 when the fit completed but failed its verdict.

    Raises:
        IdentifiabilityError: after writing the reports, when the design is not identifiable.
    """
    return _execute(config, 'fit')
