import argparse
import logging
from pathlib import Path

from config import DEFAULT_SEED, OUTPUT_DIR
from errors import SepfitError
from utils import logcfg
from .commands import cmd_check, cmd_fit
from .runconfig import ENGINES, IRLS_GROUPS, build_run_config
from .simulate import SimScenario, simulate_dataset

_log = logging.getLogger(__name__)


def _add_inputs(parser: argparse.ArgumentParser):
    # defaults stay None so a config file value is only overridden by flags actually given
    parser.add_argument('--config', type=Path, help='run.json with any of the options below')
    parser.add_argument('--formula', help="model formula, e.g. 'y ~ a*b + (1 + a | subj)'")
    parser.add_argument('--data', type=Path, help='CSV file with a header row')
    parser.add_argument('--schema', type=Path, help='JSON column schema')
    parser.add_argument('--output', type=Path, help=f'output directory (default under {OUTPUT_DIR})')
    parser.add_argument('--seed', type=int, help=f'base seed (default {DEFAULT_SEED})')
    parser.add_argument('--tree-depth', dest='tree_depth', type=int, help='classification tree depth (6)')
    parser.add_argument('--min-leaf', dest='min_leaf', type=int, help='classification tree minimum leaf (20)')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='sepfit', description='Separation diagnostics and Bayesian '
                                                                'hierarchical logistic regression.')
    commands = parser.add_subparsers(dest='command', required=True)

    check = commands.add_parser('check', help='scan a dataset for separation')
    _add_inputs(check)

    fit = commands.add_parser('fit', help='fit a model and write its reports')
    _add_inputs(fit)
    fit.add_argument('--engine', choices=[e for e in ENGINES if e != 'check'], help='irls, laplace or nuts (default)')
    sampler = fit.add_argument_group('nuts sampler')
    sampler.add_argument('--chains', type=int)
    sampler.add_argument('--iter', type=int, help='iterations per chain, warmup included')
    sampler.add_argument('--warmup', type=int)
    sampler.add_argument('--adapt-delta', dest='adapt_delta', type=float)
    sampler.add_argument('--max-treedepth', dest='max_treedepth', type=int)
    sampler.add_argument('--max-delta-energy', dest='max_delta_energy', type=float)
    sampler.add_argument('--n-rep', dest='n_rep', type=int, help='posterior predictive replications')
    priors = fit.add_argument_group('nuts priors')
    priors.add_argument('--prior-intercept-scale', dest='prior_intercept_scale', type=float)
    priors.add_argument('--prior-beta-scale', dest='prior_beta_scale', type=float)
    priors.add_argument('--prior-sd-scale', dest='prior_sd_scale', type=float)
    priors.add_argument('--lkj-eta', dest='lkj_eta', type=float)
    mle = fit.add_argument_group('irls / laplace')
    mle.add_argument('--tol', type=float)
    mle.add_argument('--max-iter', dest='max_iter', type=int)
    mle.add_argument('--irls-groups', dest='irls_groups', choices=IRLS_GROUPS,
                     help='unpooled: grouping factors as fixed contrasts (default); ignore: drop them')
    mle.add_argument('--group', help='grouping factor of the laplace random intercept (first block)')

    simulate = commands.add_parser('simulate', help='draw a synthetic dataset from a scenario')
    simulate.add_argument('scenario', type=Path, help='scenario JSON')
    simulate.add_argument('--output', type=Path, required=True)
    simulate.add_argument('--seed', type=int, default=DEFAULT_SEED)
    return parser


def run(args: argparse.Namespace) -> int:
    if args.command == 'simulate':
        simulate_dataset(SimScenario.from_json(args.scenario), args.seed, args.output)
        return 0
    if args.command == 'check':
        return cmd_check(build_run_config(args, engine='check'))
    return cmd_fit(build_run_config(args))


def main(argv: list[str] | None = None) -> int:
    logcfg.apply()
    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except SepfitError as e:
        _log.error(f'[{e.module}] {e}')
        return e.exit_code
