"""Rate studies: sweep one instance parameter, fit every tuning method, fit power laws.

Work is split into (point, repetition) tasks for a joblib pool; each task
generates its instance once and fits it with every requested method. joblib
returns results in submission order, so the record is ordered by (point,
repetition, method) no matter how many workers ran.
"""
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np
import scipy.stats
from joblib import Parallel, delayed

from robust_lasso import conf as config
from robust_lasso.core import PenaltyPair
from robust_lasso.seeding import derive_seed
from robust_lasso.simulate import InstanceSpec, generate_instance
from robust_lasso.solver import SolverConfig, fit_plain_lasso, solve_huber_lasso
from robust_lasso.tuning import (ParameterError, nguyen_tran_tuning, paper_tuning,
                                 plain_lasso_lambda, rate_constants)

logger = logging.getLogger(__name__)

SWEEP_AXES = ('n', 'o', 's', 'd')
METHODS = ('paper', 'nguyen_tran', 'plain_lasso')
METRICS = ('error_sigma', 'error_l2', 'error_l1', 'support_f1', 'theta_support_f1',
           'c_cut', 'iterations', 'nonzeros')
SUPPORT_THRESHOLD = 1e-8


@dataclass(frozen=True)
class ExperimentSpec(object):
    sweep_axis: str
    axis_values: Tuple[int, ...]
    master_seed: int
    fixed: Dict = field(default_factory=dict)
    repetitions: int = 1
    tuning_methods: Tuple[str, ...] = METHODS
    delta: float = 0.1
    c_lambda_o: Optional[float] = 2.0
    recipe_scale: float = 1.0
    gamma: float = 1.0
    kappa: float = 1.0
    c0: float = 5.0
    solver: Dict = field(default_factory=dict)
    record_timing: bool = False

    def __post_init__(self):
        if self.sweep_axis not in SWEEP_AXES:
            raise ParameterError('sweep_axis must be one of %s, got %r'
                                 % (', '.join(SWEEP_AXES), self.sweep_axis))
        values = tuple(int(v) for v in self.axis_values)
        if not values:
            raise ParameterError('axis_values must not be empty')
        if any(b <= a for a, b in zip(values, values[1:])):
            raise ParameterError('axis_values must be strictly increasing, got %s' % (values,))
        object.__setattr__(self, 'axis_values', values)
        if int(self.repetitions) < 1:
            raise ParameterError('repetitions must be at least 1, got %r' % self.repetitions)
        object.__setattr__(self, 'repetitions', int(self.repetitions))
        if not (math.isfinite(self.recipe_scale) and self.recipe_scale > 0.0):
            raise ParameterError('recipe_scale must be positive, got %r' % self.recipe_scale)
        object.__setattr__(self, 'recipe_scale', float(self.recipe_scale))
        methods = tuple(self.tuning_methods)
        unknown = [m for m in methods if m not in METHODS]
        if unknown or not methods:
            raise ParameterError('tuning_methods must be a nonempty subset of %s, got %s'
                                 % (', '.join(METHODS), methods))
        object.__setattr__(self, 'tuning_methods', methods)
        if self.master_seed is None:
            raise ParameterError('master_seed is required')
        object.__setattr__(self, 'master_seed', int(self.master_seed))
        # every point must be a valid instance before any work starts
        for index in range(len(values)):
            self.instance_spec(index, 0)

    def instance_spec(self, point_index, rep):
        values = dict(self.fixed)
        values[self.sweep_axis] = self.axis_values[point_index]
        values['seed'] = derive_seed(derive_seed(self.master_seed, point_index), rep)
        return InstanceSpec.from_dict(values)

    def to_dict(self):
        return {'sweep_axis': self.sweep_axis, 'axis_values': list(self.axis_values),
                'master_seed': self.master_seed, 'fixed': dict(self.fixed),
                'repetitions': self.repetitions, 'tuning_methods': list(self.tuning_methods),
                'delta': self.delta, 'c_lambda_o': self.c_lambda_o,
                'recipe_scale': self.recipe_scale, 'gamma': self.gamma,
                'kappa': self.kappa, 'c0': self.c0, 'solver': dict(self.solver),
                'record_timing': self.record_timing}

    @classmethod
    def from_conf(cls, section, solver_section=None, **overrides):
        values = dict((k, v) for k, v in section.items() if k not in ('csv', 'svg'))
        values.update((k, v) for k, v in overrides.items() if v is not None)
        if solver_section is not None and not values.get('solver'):
            values['solver'] = dict(solver_section)
        values['fixed'] = dict(values.get('fixed') or {})
        return cls(**values)


@dataclass(frozen=True)
class CellResult(object):
    axis: str
    axis_value: int
    point_index: int
    rep: int
    method: str
    error_sigma: float
    error_l2: float
    error_l1: float
    support_f1: float
    theta_support_f1: float
    c_cut: Optional[int]
    iterations: int
    converged: bool = True
    nonzeros: Optional[int] = None
    wall_ms: Optional[float] = None
    r_theory: Optional[float] = None


@dataclass(frozen=True)
class ExperimentRecord(object):
    spec: Optional[ExperimentSpec]
    cells: Tuple[CellResult, ...]

    @property
    def methods(self):
        seen = []
        for cell in self.cells:
            if cell.method not in seen:
                seen.append(cell.method)
        return seen

    @property
    def axis_values(self):
        return sorted(set(cell.axis_value for cell in self.cells))

    def medians(self, method, metric='error_sigma'):
        """Sorted (axis_value, median) pairs over repetitions."""
        if metric not in METRICS:
            raise ValueError('unknown metric %r' % metric)
        grouped = {}
        for cell in self.cells:
            value = getattr(cell, metric)
            if cell.method == method and value is not None:
                grouped.setdefault(cell.axis_value, []).append(value)
        return [(x, float(np.median(grouped[x]))) for x in sorted(grouped)]

    def theory(self):
        out = {}
        for cell in self.cells:
            if cell.r_theory is not None:
                out.setdefault(cell.axis_value, cell.r_theory)
        return sorted(out.items())

    @property
    def convergence_failures(self):
        return sum(1 for cell in self.cells if not cell.converged)

    def zero_points(self):
        """(method, axis value) pairs where every repetition returned beta_hat = 0."""
        nonzeros = {}
        for cell in self.cells:
            if cell.nonzeros is not None:
                nonzeros.setdefault((cell.method, cell.axis_value), []).append(cell.nonzeros)
        return sorted(key for key, counts in nonzeros.items() if not any(counts))


@dataclass(frozen=True)
class PowerLawFit(object):
    exponent: float
    intercept: float
    r_squared: float
    points: int


def support_f1(truth, estimate, threshold=SUPPORT_THRESHOLD):
    """F1 score between ``{j : truth_j != 0}`` and ``{j : |estimate_j| > threshold}``."""
    true_set = np.asarray(truth) != 0.0
    est_set = np.abs(np.asarray(estimate)) > threshold
    total = int(np.count_nonzero(true_set)) + int(np.count_nonzero(est_set))
    if total == 0:
        return 1.0
    return 2.0 * int(np.count_nonzero(true_set & est_set)) / total


def _theory(instance_spec, delta):
    if instance_spec.n < 3 or instance_spec.d < 3 or instance_spec.s < 1:
        return None
    try:
        return rate_constants(instance_spec.n, instance_spec.d, instance_spec.s,
                              instance_spec.o, delta).r_total
    except ParameterError:
        return None


def _fit(spec, method, instance, instance_spec, solver_config):
    if method == 'paper':
        penalties, _ = paper_tuning(instance.n, instance.d, instance_spec.s, instance_spec.o,
                                    spec.delta, instance_spec.sigma, instance.rho,
                                    spec.c_lambda_o, spec.kappa, spec.c0)
        if spec.recipe_scale != 1.0:
            penalties = PenaltyPair(spec.recipe_scale * penalties.lambda_s, penalties.lambda_o,
                                    penalties.provenance)
        return solve_huber_lasso(instance, penalties, solver_config)
    if method == 'nguyen_tran':
        penalties = nguyen_tran_tuning(instance.n, instance.d, instance_spec.sigma,
                                       instance.rho, spec.gamma)
        return solve_huber_lasso(instance, penalties, solver_config)
    lambda_s = plain_lasso_lambda(instance.n, instance.d, spec.delta, instance_spec.sigma,
                                  instance.rho)
    return fit_plain_lasso(instance, lambda_s, solver_config)


def run_point(spec, point_index, rep):
    instance_spec = spec.instance_spec(point_index, rep)
    instance = generate_instance(instance_spec)
    solver_config = SolverConfig.from_conf(spec.solver)
    r_theory = _theory(instance_spec, spec.delta)
    cells = []
    for method in spec.tuning_methods:
        start = time.perf_counter()
        fit = _fit(spec, method, instance, instance_spec, solver_config)
        elapsed = (time.perf_counter() - start) * 1000.0
        error = instance.beta_star - fit.beta_hat
        if not fit.converged:
            logger.warning('%s fit did not converge at %s=%d rep=%d', method, spec.sweep_axis,
                           spec.axis_values[point_index], rep)
        cells.append(CellResult(
            axis=spec.sweep_axis, axis_value=spec.axis_values[point_index],
            point_index=point_index, rep=rep, method=method,
            error_sigma=instance.sigma_norm(error),
            error_l2=float(np.linalg.norm(error)),
            error_l1=float(np.sum(np.abs(error))),
            support_f1=support_f1(instance.beta_star, fit.beta_hat),
            theta_support_f1=support_f1(instance.theta_star, fit.theta_hat),
            c_cut=fit.c_cut, iterations=fit.iterations, converged=fit.converged,
            nonzeros=int(np.count_nonzero(fit.beta_hat)),
            wall_ms=elapsed if spec.record_timing else None, r_theory=r_theory))
    return cells


def run_experiment(spec, n_jobs=None):
    """Run every (point, repetition, method) cell of ``spec``.

    The record depends only on ``spec`` (including its master seed), apart
    from ``wall_ms`` when timing is switched on.
    """
    logger.info('rate study over %s=%s, %d repetitions, methods %s', spec.sweep_axis,
                list(spec.axis_values), spec.repetitions, ', '.join(spec.tuning_methods))
    tasks = [(p, r) for p in range(len(spec.axis_values)) for r in range(spec.repetitions)]
    results = Parallel(n_jobs=config.worker_count(n_jobs))(
        delayed(run_point)(spec, p, r) for p, r in tasks)
    record = ExperimentRecord(spec, tuple(cell for cells in results for cell in cells))
    if record.convergence_failures:
        logger.warning('%d of %d fits did not converge', record.convergence_failures,
                       len(record.cells))
    for method, value in record.zero_points():
        logger.warning('%s returned beta_hat = 0 in every repetition at %s=%d; its error there '
                       'is |beta*| whatever the outliers do', method, spec.sweep_axis, value)
    logger.info('rate study finished: %d cells', len(record.cells))
    return record


def power_law(axis_values, values):
    """Least squares of log(value) on log(axis value)."""
    x = np.asarray(axis_values, dtype=float)
    y = np.asarray(values, dtype=float)
    if x.size < 3:
        raise ValueError('need at least 3 points, got %d' % x.size)
    if np.any(x <= 0.0) or np.any(y <= 0.0):
        raise ValueError('power law needs positive axis values and medians')
    fit = scipy.stats.linregress(np.log(x), np.log(y))
    r_squared = float(fit.rvalue) ** 2
    if not math.isfinite(r_squared):
        r_squared = 0.0
    return PowerLawFit(float(fit.slope), float(fit.intercept), min(max(r_squared, 0.0), 1.0),
                       int(x.size))


def fit_power_law(record, method, metric='error_sigma'):
    pairs = record.medians(method, metric)
    return power_law([x for x, _ in pairs], [m for _, m in pairs])
