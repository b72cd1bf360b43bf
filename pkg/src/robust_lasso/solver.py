"""Solvers for the robust (Huber) Lasso, the extended Lasso and the plain Lasso.

The primary method is accelerated proximal gradient on

    L(beta) = lambda_o**2 * sum_i H(r_i(beta)) + lambda_s * ||beta||_1

with backtracking and a momentum restart whenever the objective would go up,
so every recorded objective trace is nonincreasing. The extended Lasso is
solved by exact block minimisation over (beta, theta).
"""
import enum
import logging
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from robust_lasso.core import (FitResult, InstanceError, cut_count, huber_psi,
                               huber_value, residual_scaled)
from robust_lasso.seeding import derive_seed, make_rng
from robust_lasso.tuning import ParameterError

logger = logging.getLogger(__name__)

KKT_RELATIVE_TOLERANCE = 1e-6
KKT_CHECK_INTERVAL = 10
INNER_KKT_FRACTION = 0.1
BACKTRACK_FACTOR = 2.0
FIXED_STEP_MARGIN = 1.1
TINY = 1e-300
# relative objective change treated as rounding noise
OBJECTIVE_NOISE = 1e-12


class StepRule(enum.Enum):
    FIXED = 'fixed'
    BACKTRACKING = 'backtracking'


@dataclass(frozen=True)
class SolverConfig(object):
    max_iterations: int = 10000
    tolerance: float = 1e-9
    # absolute sup-norm slack; None means KKT_RELATIVE_TOLERANCE * lambda_s
    kkt_tolerance: Optional[float] = None
    step_rule: StepRule = StepRule.BACKTRACKING
    acceleration: bool = True
    power_iterations: int = 50
    seed: int = 0

    def __post_init__(self):
        if not self.tolerance > 0.0:
            raise ParameterError('tolerance must be positive, got %r' % self.tolerance)
        if int(self.max_iterations) < 1:
            raise ParameterError('max_iterations must be at least 1, got %r' % self.max_iterations)
        if self.kkt_tolerance is not None and not self.kkt_tolerance > 0.0:
            raise ParameterError('kkt_tolerance must be positive, got %r' % self.kkt_tolerance)
        if int(self.power_iterations) < 1:
            raise ParameterError('power_iterations must be at least 1')
        object.__setattr__(self, 'step_rule', StepRule(self.step_rule))
        object.__setattr__(self, 'max_iterations', int(self.max_iterations))

    def kkt_slack(self, lambda_s):
        if self.kkt_tolerance is not None:
            return self.kkt_tolerance
        return KKT_RELATIVE_TOLERANCE * lambda_s

    @classmethod
    def from_conf(cls, section, **overrides):
        values = dict(section)
        values.update((k, v) for k, v in overrides.items() if v is not None)
        return cls(**values)


@dataclass(frozen=True)
class KktReport(object):
    gradient_supnorm: float
    support_violation: float
    satisfied: bool
    lambda_s: float
    tolerance: float

    @property
    def residual(self):
        return max(self.gradient_supnorm - self.lambda_s, 0.0, self.support_violation)


def _stationarity(correlation, beta, lambda_s, tolerance):
    # correlation is minus the gradient of the smooth part
    supnorm = float(np.max(np.abs(correlation), initial=0.0))
    support = np.flatnonzero(beta)
    if support.size:
        violation = float(np.max(np.abs(correlation[support] - lambda_s * np.sign(beta[support]))))
    else:
        violation = 0.0
    satisfied = supnorm <= lambda_s + tolerance and violation <= tolerance
    return KktReport(supnorm, violation, satisfied, lambda_s, tolerance)


def _require_positive(penalties):
    if penalties.degenerate:
        raise ParameterError('penalties must be strictly positive, got lambda_s=%r lambda_o=%r'
                         % (penalties.lambda_s, penalties.lambda_o))


def prox_l1(v, threshold):
    """Soft thresholding ``sign(v) * max(|v| - threshold, 0)``; ties go to 0."""
    if threshold < 0.0:
        raise ValueError('threshold must be nonnegative, got %r' % threshold)
    v = np.asarray(v, dtype=float)
    return np.sign(v) * np.maximum(np.abs(v) - threshold, 0.0)


class HuberLoss(object):
    """Smooth part ``lambda_o**2 * sum H((y - X beta) / (lambda_o sqrt(n)))``."""

    def __init__(self, X, y, lambda_o):
        self.X = X
        self.y = y
        self.lambda_o = lambda_o
        self.scale = lambda_o * np.sqrt(X.shape[0])

    def value(self, beta):
        r = (self.y - self.X.dot(beta)) / self.scale
        return self.lambda_o ** 2 * float(np.sum(huber_value(r)))

    def value_and_gradient(self, beta):
        r = (self.y - self.X.dot(beta)) / self.scale
        value = self.lambda_o ** 2 * float(np.sum(huber_value(r)))
        gradient = -(self.lambda_o / np.sqrt(self.X.shape[0])) * self.X.T.dot(huber_psi(r))
        return value, gradient


class SquaredLoss(object):
    """Smooth part ``||y - X beta||**2 / (2n)``."""

    def __init__(self, X, y):
        self.X = X
        self.y = y
        self.n = X.shape[0]

    def value(self, beta):
        resid = self.y - self.X.dot(beta)
        return 0.5 * float(resid.dot(resid)) / self.n

    def value_and_gradient(self, beta):
        resid = self.y - self.X.dot(beta)
        return 0.5 * float(resid.dot(resid)) / self.n, -self.X.T.dot(resid) / self.n


def lipschitz_estimate(X, iterations=50, seed=0):
    """Power-iteration estimate of ``||X||_op**2 / n``."""
    n, d = X.shape
    rng = make_rng(derive_seed(seed, 0))
    v = rng.standard_normal(d)
    estimate = 0.0
    for _ in range(iterations):
        w = X.T.dot(X.dot(v))
        norm = np.linalg.norm(w)
        if norm == 0.0:
            break
        estimate = float(v.dot(w) / v.dot(v))
        v = w / norm
    if estimate <= 0.0:
        # all-zero design: any step is exact
        return 1.0
    return estimate / n


def _proximal_gradient(loss, lambda_s, beta0, config, lipschitz):
    L = lipschitz * FIXED_STEP_MARGIN if config.step_rule is StepRule.FIXED else lipschitz
    backtrack = config.step_rule is StepRule.BACKTRACKING
    slack = config.kkt_slack(lambda_s)

    x = np.array(beta0, dtype=float)
    F_x = loss.value(x) + lambda_s * float(np.sum(np.abs(x)))
    trace = [F_x]
    z, t, momentum = x, 1.0, False
    converged = False
    iterations = 0

    while iterations < config.max_iterations:
        iterations += 1
        f_z, g_z = loss.value_and_gradient(z)
        while True:
            x_new = prox_l1(z - g_z / L, lambda_s / L)
            step = x_new - z
            f_new = loss.value(x_new)
            if not backtrack:
                break
            if f_new <= f_z + g_z.dot(step) + 0.5 * L * step.dot(step) + 1e-15 * abs(f_z):
                break
            L *= BACKTRACK_FACTOR
        F_new = f_new + lambda_s * float(np.sum(np.abs(x_new)))

        if F_new > F_x:
            if momentum:
                logger.debug('momentum restart at iteration %d', iterations)
                z, t, momentum = x, 1.0, False
                continue
            if F_new > F_x + OBJECTIVE_NOISE * max(abs(F_x), TINY):
                # a plain step no longer descends: stalled at floating precision
                _, g_x = loss.value_and_gradient(x)
                converged = _stationarity(-g_x, x, lambda_s, slack).satisfied
                break

        decrease = (F_x - F_new) / max(abs(F_x), TINY)
        x_prev, x, F_x = x, x_new, F_new
        trace.append(F_x)
        if config.acceleration:
            t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            z = x + ((t - 1.0) / t_next) * (x - x_prev)
            momentum = t > 1.0
            t = t_next
        else:
            z = x

        if decrease <= config.tolerance or iterations % KKT_CHECK_INTERVAL == 0:
            _, g_x = loss.value_and_gradient(x)
            if _stationarity(-g_x, x, lambda_s, slack).satisfied:
                converged = True
                break

    _, g_x = loss.value_and_gradient(x)
    report = _stationarity(-g_x, x, lambda_s, slack)
    return x, trace, iterations, converged, report, L


def _initial_beta(d, beta0):
    if beta0 is None:
        return np.zeros(d)
    beta0 = np.asarray(beta0, dtype=float)
    if beta0.shape != (d,):
        raise InstanceError('beta0 must have shape (%d,), got %s' % (d, beta0.shape))
    return beta0


def objective_huber(instance, beta, penalties):
    """``lambda_o**2 * sum_i H(r_i(beta)) + lambda_s * ||beta||_1``."""
    _require_positive(penalties)
    r = residual_scaled(instance, beta, penalties.lambda_o)
    return (penalties.lambda_o ** 2 * float(np.sum(huber_value(r)))
            + penalties.lambda_s * float(np.sum(np.abs(beta))))


def objective_extended(instance, beta, theta, penalties):
    _require_positive(penalties)
    beta = np.asarray(beta, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if beta.shape != (instance.d,) or theta.shape != (instance.n,):
        raise InstanceError('beta/theta shapes %s/%s do not match a %dx%d design'
                            % (beta.shape, theta.shape, instance.n, instance.d))
    resid = instance.y - instance.X.dot(beta) - np.sqrt(instance.n) * theta
    return (0.5 * float(resid.dot(resid)) / instance.n
            + penalties.lambda_s * float(np.sum(np.abs(beta)))
            + penalties.lambda_o * float(np.sum(np.abs(theta))))


def theta_closed_form(instance, beta, lambda_o):
    """Exact theta-minimiser ``soft((y - X beta) / sqrt(n), lambda_o)``."""
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (instance.d,):
        raise InstanceError('beta must have shape (%d,), got %s' % (instance.d, beta.shape))
    return prox_l1((instance.y - instance.X.dot(beta)) / np.sqrt(instance.n), lambda_o)


def kkt_check(instance, beta_hat, penalties, tolerance=None):
    """First-order optimality of ``beta_hat`` for the Huber objective.

    Args:
        instance: the problem.
        beta_hat: candidate minimiser.
        penalties: the (lambda_s, lambda_o) pair.
        tolerance: sup-norm slack; defaults to ``1e-6 * lambda_s``.

    Returns:
        KktReport with the gradient sup-norm and the worst sign mismatch on
        the support of ``beta_hat``.
    """
    beta_hat = np.asarray(beta_hat, dtype=float)
    if beta_hat.shape != (instance.d,):
        raise InstanceError('beta must have shape (%d,), got %s' % (instance.d, beta_hat.shape))
    slack = KKT_RELATIVE_TOLERANCE * penalties.lambda_s if tolerance is None else tolerance
    loss = HuberLoss(instance.X, instance.y, penalties.lambda_o)
    _, gradient = loss.value_and_gradient(beta_hat)
    return _stationarity(-gradient, beta_hat, penalties.lambda_s, slack)


def solve_huber_lasso(instance, penalties, config=None, beta0=None):
    _require_positive(penalties)
    config = config or SolverConfig()
    loss = HuberLoss(instance.X, instance.y, penalties.lambda_o)
    lipschitz = lipschitz_estimate(instance.X, config.power_iterations, config.seed)
    beta, trace, iterations, converged, report, _ = _proximal_gradient(
        loss, penalties.lambda_s, _initial_beta(instance.d, beta0), config, lipschitz)
    if not converged:
        logger.warning('huber solve stopped after %d iterations, kkt residual %.3g',
                       iterations, report.residual)
    theta = theta_closed_form(instance, beta, penalties.lambda_o)
    c_cut = cut_count(instance, beta, penalties.lambda_o) if instance.has_truth else None
    return FitResult(beta, theta, tuple(trace), report.residual, iterations,
                     converged, c_cut, 'huber')


def _lasso(X, y, lambda_s, config, beta0, lipschitz=None):
    if not lambda_s > 0.0:
        raise ParameterError('lambda_s must be positive, got %r' % lambda_s)
    if lipschitz is None:
        lipschitz = lipschitz_estimate(X, config.power_iterations, config.seed)
    return _proximal_gradient(SquaredLoss(X, y), lambda_s, beta0, config, lipschitz)


def solve_plain_lasso(X, y, lambda_s, config=None, beta0=None):
    """Minimiser of ``||y - X beta||**2 / (2n) + lambda_s ||beta||_1``.

    Non-convergence is logged, not raised.
    """
    config = config or SolverConfig()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise InstanceError('X %s and y %s do not match' % (X.shape, y.shape))
    beta, _, iterations, converged, report, _ = _lasso(
        X, y, lambda_s, config, _initial_beta(X.shape[1], beta0))
    if not converged:
        logger.warning('lasso solve stopped after %d iterations, kkt residual %.3g',
                       iterations, report.residual)
    return beta


def fit_plain_lasso(instance, lambda_s, config=None):
    """Plain Lasso on ``instance`` with full diagnostics; theta_hat is zero."""
    config = config or SolverConfig()
    beta, trace, iterations, converged, report, _ = _lasso(
        instance.X, instance.y, lambda_s, config, np.zeros(instance.d))
    if not converged:
        logger.warning('lasso solve stopped after %d iterations, kkt residual %.3g',
                       iterations, report.residual)
    return FitResult(beta, np.zeros(instance.n), tuple(trace), report.residual,
                     iterations, converged, None, 'plain_lasso')


def solve_extended_lasso(instance, penalties, config=None):
    """Alternating minimisation of the joint (beta, theta) objective.

    The beta-step is a plain Lasso on ``y - sqrt(n) theta`` warm-started from
    the current beta; the theta-step is :func:`theta_closed_form`.
    """
    _require_positive(penalties)
    config = config or SolverConfig()
    slack = config.kkt_slack(penalties.lambda_s)
    inner = replace(config, kkt_tolerance=INNER_KKT_FRACTION * slack)
    lipschitz = lipschitz_estimate(instance.X, config.power_iterations, config.seed)
    root_n = np.sqrt(instance.n)

    beta = np.zeros(instance.d)
    theta = np.zeros(instance.n)
    J = objective_extended(instance, beta, theta, penalties)
    trace = [J]
    converged = False
    iterations = 0

    while iterations < config.max_iterations:
        iterations += 1
        beta_new, _, _, inner_ok, _, step_lipschitz = _lasso(
            instance.X, instance.y - root_n * theta, penalties.lambda_s, inner, beta, lipschitz)
        if inner.step_rule is StepRule.BACKTRACKING:
            lipschitz = step_lipschitz
        if not inner_ok:
            logger.debug('inner lasso at outer step %d did not reach its tolerance', iterations)
        theta_new = theta_closed_form(instance, beta_new, penalties.lambda_o)
        J_new = objective_extended(instance, beta_new, theta_new, penalties)
        if J_new > J + OBJECTIVE_NOISE * max(abs(J), TINY):
            converged = kkt_check(instance, beta, penalties, slack).satisfied
            break
        decrease = (J - J_new) / max(abs(J), TINY)
        beta, theta, J = beta_new, theta_new, J_new
        trace.append(J)
        if decrease <= config.tolerance or iterations % KKT_CHECK_INTERVAL == 0:
            if kkt_check(instance, beta, penalties, slack).satisfied:
                converged = True
                break

    report = kkt_check(instance, beta, penalties, slack)
    if not converged:
        logger.warning('extended solve stopped after %d outer steps, kkt residual %.3g',
                       iterations, report.residual)
    c_cut = cut_count(instance, beta, penalties.lambda_o) if instance.has_truth else None
    return FitResult(beta, theta, tuple(trace), report.residual, iterations,
                     converged, c_cut, 'extended')
