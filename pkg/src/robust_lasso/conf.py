import copy
import logging
import os

import yaml
from attrdict import AttrDict

logger = logging.getLogger(__name__)

WORKERS_ENV = 'ROBUST_LASSO_WORKERS'


class ConfigError(ValueError):
    pass


conf = AttrDict({
    'solver': {
        'max_iterations': 10000,
        'tolerance': 1e-9,
        'kkt_tolerance': None,
        'step_rule': 'backtracking',
        'acceleration': True,
        'power_iterations': 50,
        'seed': 0,
    },
    'simulate': {
        'n': 200,
        'd': 50,
        's': 5,
        'o': 0,
        'sigma': 1.0,
        'covariance': 'identity',
        'correlation': 0.0,
        'explicit_matrix': None,
        'beta_magnitude': 1.0,
        'adversary': 'none',
        'seed': 0,
    },
    'tuning': {
        'method': 'paper',
        'delta': 0.1,
        'c_lambda_o': None,
        'kappa': 1.0,
        'rho': 1.0,
        'c0': 5.0,
        'gamma': 1.0,
    },
    'verify': {
        'trials': 2000,
        'master_seed': None,
        'suite': [],
    },
    'bench': {
        'sweep_axis': 'o',
        'axis_values': [],
        'fixed': {},
        'repetitions': 1,
        'tuning_methods': ['paper', 'nguyen_tran', 'plain_lasso'],
        'master_seed': None,
        'delta': 0.1,
        'c_lambda_o': 2.0,
        'recipe_scale': 1.0,
        'gamma': 1.0,
        'kappa': 1.0,
        'c0': 5.0,
        'record_timing': False,
        'csv': None,
        'svg': None,
    },
})


def _merge(defaults, overrides, where):
    merged = dict(defaults)
    for key, value in overrides.items():
        if key not in defaults:
            raise ConfigError('unknown key %r in section %r' % (key, where))
        merged[key] = value
    return merged


def load_config(path):
    """Read a YAML (or JSON) file and deep-merge it over the defaults.

    Returns a fresh AttrDict; the module-level ``conf`` is never mutated.
    """
    if not os.path.isfile(path):
        logger.error('%s is not a file', path)
        raise ConfigError('%s is not a file' % path)
    try:
        with open(path) as stream:
            loaded = yaml.safe_load(stream)
    except yaml.YAMLError as exc:
        raise ConfigError('%s: %s' % (path, exc))
    if loaded is None:
        loaded = {}
    if not isinstance(loaded, dict):
        raise ConfigError('%s must hold a mapping, got %s' % (path, type(loaded).__name__))

    result = copy.deepcopy(dict((k, dict(v)) for k, v in conf.items()))
    for section, values in loaded.items():
        if section not in result:
            raise ConfigError('unknown section %r in %s' % (section, path))
        if not isinstance(values, dict):
            raise ConfigError('section %r in %s must be a mapping' % (section, path))
        result[section] = _merge(result[section], values, section)
    return AttrDict(result)


def worker_count(n_jobs=None):
    """joblib ``n_jobs``: explicit argument, then the environment, then all cores."""
    if n_jobs is not None:
        return int(n_jobs)
    value = os.environ.get(WORKERS_ENV)
    if not value:
        return -1
    try:
        workers = int(value)
    except ValueError:
        raise ConfigError('%s must be an integer, got %r' % (WORKERS_ENV, value))
    if workers == 0:
        raise ConfigError('%s must not be 0' % WORKERS_ENV)
    return workers
