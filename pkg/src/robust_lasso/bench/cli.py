"""Command line entry point: ``python -m robust_lasso <command> ...``.

Values come from the command line first, then the ``--config`` file, then
the defaults in :mod:`robust_lasso.conf`.
"""
import argparse
import json
import logging
import sys

import numpy as np
import yaml

from robust_lasso import conf as config
from robust_lasso.bench import experiment, report
from robust_lasso.core import InstanceError, PenaltyPair, Provenance
from robust_lasso.simulate import InstanceSpec, generate_instance, load_instance, save_instance
from robust_lasso.solver import (SolverConfig, fit_plain_lasso, kkt_check, solve_extended_lasso,
                                 solve_huber_lasso)
from robust_lasso.tuning import (ParameterError, cond0_decomposition, condition_report,
                                 nguyen_tran_tuning, paper_tuning)
from robust_lasso.verify import PreconditionError, run_suite

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_IO = 1
EXIT_INVALID = 2
EXIT_NOT_CONVERGED = 3
EXIT_VERIFY_FAILED = 4

SIMULATE_KEYS = ('n', 'd', 's', 'o', 'sigma', 'covariance', 'correlation', 'beta_magnitude',
                 'adversary', 'seed')
TUNING_KEYS = ('method', 'delta', 'c_lambda_o', 'kappa', 'rho', 'c0', 'gamma')
SOLVER_KEYS = ('max_iterations', 'tolerance', 'kkt_tolerance', 'step_rule')


def _section(cfg, name, args, keys):
    values = dict(cfg[name])
    for key in keys:
        value = getattr(args, key, None)
        if value is not None:
            values[key] = value
    return values


def _dump(payload, path=None):
    text = json.dumps(payload, indent=2, sort_keys=True, default=report.jsonable)
    if path is None:
        sys.stdout.write(text + '\n')
        return
    try:
        with open(path, 'w') as stream:
            stream.write(text + '\n')
    except OSError as exc:
        raise OSError('could not write %s: %s' % (path, exc))


def _solver_config(cfg, args):
    return SolverConfig.from_conf(_section(cfg, 'solver', args, SOLVER_KEYS))


def _penalties(tuning, n, d, s, o, sigma, rho, lambda_s=None, lambda_o=None):
    method = tuning['method']
    if method == 'manual':
        if lambda_s is None or lambda_o is None:
            raise ParameterError('manual tuning needs --lambda-s and --lambda-o')
        return PenaltyPair(lambda_s, lambda_o, Provenance.MANUAL), None
    if method == 'nguyen_tran':
        if sigma is None:
            raise ParameterError('nguyen_tran tuning needs sigma')
        return nguyen_tran_tuning(n, d, sigma, rho, tuning['gamma']), None
    if method != 'paper':
        raise ParameterError('unknown tuning method %r' % method)
    if s is None or sigma is None:
        raise ParameterError('--tuning paper needs s and sigma; pass --s and --sigma')
    return paper_tuning(n, d, s, o, tuning['delta'], sigma, rho, tuning['c_lambda_o'],
                        tuning['kappa'], tuning['c0'])


def cmd_fit(cfg, args):
    instance, spec = load_instance(args.instance)
    tuning = _section(cfg, 'tuning', args, TUNING_KEYS)
    s = args.s if args.s is not None else (instance.s if instance.has_truth else
                                           spec.s if spec is not None else None)
    o = args.o if args.o is not None else (instance.o if instance.has_truth else
                                           spec.o if spec is not None else 0)
    sigma = args.sigma if args.sigma is not None else instance.sigma
    penalties, _ = _penalties(tuning, instance.n, instance.d, s, o, sigma, instance.rho,
                              args.lambda_s, args.lambda_o)
    solver_config = _solver_config(cfg, args)
    if args.solver == 'extended':
        fit = solve_extended_lasso(instance, penalties, solver_config)
    elif args.solver == 'plain_lasso':
        fit = fit_plain_lasso(instance, penalties.lambda_s, solver_config)
    else:
        fit = solve_huber_lasso(instance, penalties, solver_config)

    payload = {'penalties': penalties.to_dict(), 'method': fit.method,
               'converged': fit.converged, 'iterations': fit.iterations,
               'objective': fit.objective, 'kkt_residual': fit.kkt_residual,
               'beta_hat': fit.beta_hat, 'theta_support': np.flatnonzero(fit.theta_hat)}
    if fit.method != 'plain_lasso':
        payload['kkt'] = kkt_check(instance, fit.beta_hat, penalties,
                                   solver_config.kkt_slack(penalties.lambda_s)).satisfied
    if fit.c_cut is not None:
        payload['c_cut'] = fit.c_cut
    _dump(payload, args.output)
    if not fit.converged:
        logger.error('solver did not converge after %d iterations', fit.iterations)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def cmd_simulate(cfg, args):
    values = _section(cfg, 'simulate', args, SIMULATE_KEYS)
    spec = InstanceSpec.from_conf(values)
    save_instance(generate_instance(spec), args.output, spec)
    return EXIT_OK


def cmd_tuning(cfg, args):
    tuning = _section(cfg, 'tuning', args, TUNING_KEYS)
    shape = _section(cfg, 'simulate', args, ('n', 'd', 's', 'o', 'sigma'))
    penalties, bundle = _penalties(tuning, shape['n'], shape['d'], shape['s'], shape['o'],
                                   shape['sigma'], tuning['rho'], args.lambda_s, args.lambda_o)
    payload = {'penalties': penalties.to_dict()}
    if bundle is not None:
        payload['bundle'] = bundle.to_dict()
        payload['conditions'] = condition_report(bundle).to_dict()
        terms = cond0_decomposition(bundle.n, bundle.d, bundle.s, bundle.o, penalties)
        payload['cond0_terms'] = {'A1B1': terms.A1B1, 'A1B2': terms.A1B2,
                                  'A2B1': terms.A2B1, 'A2B2': terms.A2B2,
                                  'total': terms.total}
    _dump(payload, args.output)
    return EXIT_OK


def _parse_params(pairs):
    params = {}
    for pair in pairs or ():
        key, sep, value = pair.partition('=')
        if not sep:
            raise config.ConfigError('--param expects key=value, got %r' % pair)
        params[key.strip()] = yaml.safe_load(value)
    return params


def cmd_verify(cfg, args):
    section = cfg['verify']
    seed = args.seed if args.seed is not None else section['master_seed']
    if seed is None:
        raise config.ConfigError('verify needs --seed or verify.master_seed')
    trials = args.trials if args.trials is not None else section['trials']
    if args.id:
        entries = [{'id': args.id, 'params': _parse_params(args.param)}]
    else:
        entries = list(section['suite'] or ())
    if not entries:
        raise config.ConfigError('nothing to verify: pass --id or a config with verify.suite')

    records = run_suite(entries, int(seed), int(trials), args.workers)
    if args.output:
        report.emit_suite_csv(records, args.output)
    failed = [r for r in records if not r.passed]
    for record in records:
        logger.info('%s: %s', record.to_row()['id'], 'pass' if record.passed else 'FAIL')
    if failed:
        logger.error('%d of %d checks failed', len(failed), len(records))
        return EXIT_VERIFY_FAILED
    return EXIT_OK


def cmd_rate_study(cfg, args):
    section = cfg['bench']
    seed = args.seed if args.seed is not None else section['master_seed']
    if seed is None:
        raise config.ConfigError('rate-study needs --seed or bench.master_seed')
    spec = experiment.ExperimentSpec.from_conf(section, cfg['solver'], master_seed=seed,
                                               repetitions=args.repetitions)
    record = experiment.run_experiment(spec, args.workers)
    csv_path = args.csv or section['csv'] or 'rate_study.csv'
    report.emit_csv(record, csv_path)
    svg_path = args.svg or section['svg']
    if svg_path:
        report.emit_plot(record, svg_path)
    for method in spec.tuning_methods:
        try:
            fit = experiment.fit_power_law(record, method)
        except ValueError as exc:
            logger.info('no power law for %s: %s', method, exc)
            continue
        logger.info('%s: %s exponent %.3f (r^2 %.3f)', method, spec.sweep_axis, fit.exponent,
                    fit.r_squared)
    return EXIT_OK


def cmd_plot(cfg, args):
    report.emit_plot(report.read_csv(args.csv), args.svg)
    return EXIT_OK


def _add_tuning_flags(parser):
    parser.add_argument('--tuning', dest='method',
                        choices=('paper', 'nguyen_tran', 'manual'))
    parser.add_argument('--delta', type=float)
    parser.add_argument('--c-lambda-o', dest='c_lambda_o', type=float)
    parser.add_argument('--kappa', type=float)
    parser.add_argument('--c0', type=float)
    parser.add_argument('--gamma', type=float)
    parser.add_argument('--lambda-s', dest='lambda_s', type=float)
    parser.add_argument('--lambda-o', dest='lambda_o', type=float)


def _add_shape_flags(parser, dimensions=True):
    if dimensions:
        parser.add_argument('--n', type=int)
        parser.add_argument('--d', type=int)
    parser.add_argument('--s', type=int)
    parser.add_argument('--o', type=int)
    parser.add_argument('--sigma', type=float)


def build_parser():
    parser = argparse.ArgumentParser(prog='robust_lasso',
                                     description='Robust sparse regression toolkit')
    parser.add_argument('--config', help='YAML or JSON file merged over the defaults')
    parser.add_argument('--log-level', default='INFO',
                        choices=('DEBUG', 'INFO', 'WARNING', 'ERROR'))
    parser.add_argument('--workers', type=int,
                        help='joblib n_jobs; defaults to $%s or all cores' % config.WORKERS_ENV)
    commands = parser.add_subparsers(dest='command')
    commands.required = True

    fit = commands.add_parser('fit', help='fit one instance directory')
    fit.add_argument('instance')
    fit.add_argument('--solver', default='huber', choices=('huber', 'extended', 'plain_lasso'))
    fit.add_argument('--max-iterations', dest='max_iterations', type=int)
    fit.add_argument('--tolerance', type=float)
    fit.add_argument('--kkt-tolerance', dest='kkt_tolerance', type=float)
    fit.add_argument('--step-rule', dest='step_rule', choices=('fixed', 'backtracking'))
    fit.add_argument('--output')
    _add_shape_flags(fit, dimensions=False)
    _add_tuning_flags(fit)
    fit.set_defaults(handler=cmd_fit)

    simulate = commands.add_parser('simulate', help='generate and save an instance')
    _add_shape_flags(simulate)
    simulate.add_argument('--covariance',
                          choices=('identity', 'equicorrelated', 'toeplitz', 'explicit'))
    simulate.add_argument('--correlation', type=float)
    simulate.add_argument('--beta-magnitude', dest='beta_magnitude', type=float)
    simulate.add_argument('--adversary', help='e.g. none, sign_flip_large, residual_aligned(2)')
    simulate.add_argument('--seed', type=int)
    simulate.add_argument('--output', required=True)
    simulate.set_defaults(handler=cmd_simulate)

    tuning = commands.add_parser('tuning', help='print penalties, constants and conditions')
    _add_shape_flags(tuning)
    _add_tuning_flags(tuning)
    tuning.add_argument('--rho', type=float)
    tuning.add_argument('--output')
    tuning.set_defaults(handler=cmd_tuning)

    verify = commands.add_parser('verify', help='run Monte Carlo coverage checks')
    verify.add_argument('--id', help='single check to run instead of the configured suite')
    verify.add_argument('--param', action='append', help='key=value for --id, repeatable')
    verify.add_argument('--trials', type=int)
    verify.add_argument('--seed', type=int)
    verify.add_argument('--output', help='suite CSV')
    verify.set_defaults(handler=cmd_verify)

    study = commands.add_parser('rate-study', help='run a sweep from the bench config')
    study.add_argument('--seed', type=int)
    study.add_argument('--repetitions', type=int)
    study.add_argument('--csv')
    study.add_argument('--svg')
    study.set_defaults(handler=cmd_rate_study)

    plot = commands.add_parser('plot', help='render a rate study CSV as SVG')
    plot.add_argument('csv')
    plot.add_argument('svg')
    plot.set_defaults(handler=cmd_plot)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level),
                        format='%(asctime)s %(levelname)s %(name)s: %(message)s')
    try:
        cfg = config.load_config(args.config) if args.config else config.conf
        return args.handler(cfg, args)
    except (config.ConfigError, ParameterError, InstanceError, PreconditionError) as exc:
        logger.error('%s', exc)
        return EXIT_INVALID
    except ValueError as exc:
        logger.error('invalid input: %s', exc)
        return EXIT_INVALID
    except OSError as exc:
        logger.error('%s', exc)
        return EXIT_IO
