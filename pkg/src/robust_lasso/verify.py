"""Monte Carlo checks of the probabilistic ingredients behind the error bounds.

A uniform statement ("for all v and u") is checked on a finite, seeded
family of directions per trial; a trial fails when any direction violates
the inequality. Trials run in a joblib pool, each with its own derived seed, so
failure counts do not depend on the worker count.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np
import scipy.linalg
import scipy.optimize
import scipy.stats
from joblib import Parallel, delayed

from robust_lasso import conf as config
from robust_lasso.core import ParameterError, covariance_factor, cut_count, huber_psi
from robust_lasso.seeding import derive_seed, make_rng, spawn_seed
from robust_lasso.tuning import (Condition, a1_constant, b1_constant, c_n_delta,
                                 condition_report, paper_tuning)

logger = logging.getLogger(__name__)

CONFIDENCE = 0.95
MIN_WIDTH_TRIALS = 100
MIN_KAPPA_SAMPLES = 1000
WIDTH_SLACK_SE = 3.0
VIOLATION_SLACK = 1e-12
CONE_ITERATIONS = 500
REFINE_DIMENSION = 8
REFINE_SPARSITY = 2
REFINE_LIMIT = 20
DEFAULT_D = 10


class PreconditionError(ValueError):

    def __init__(self, condition, message):
        super(PreconditionError, self).__init__('%s: %s' % (condition, message))
        self.condition = condition


def wilson_halfwidth(successes, trials, confidence=CONFIDENCE):
    if trials <= 0:
        return 0.0
    z = scipy.stats.norm.ppf(0.5 + confidence / 2.0)
    p = successes / trials
    denom = 1.0 + z * z / trials
    return (z / denom) * math.sqrt(p * (1.0 - p) / trials + z * z / (4.0 * trials * trials))


@dataclass(frozen=True)
class CoverageRecord(object):
    inequality_id: str
    trials: int
    failures: int
    nominal_level: float
    params: Dict = field(default_factory=dict)
    notes: Dict = field(default_factory=dict)

    @property
    def empirical_coverage(self):
        return 1.0 - self.failures / self.trials if self.trials else 1.0

    @property
    def wilson_halfwidth(self):
        return wilson_halfwidth(self.trials - self.failures, self.trials)

    @property
    def passed(self):
        return self.empirical_coverage >= self.nominal_level - self.wilson_halfwidth

    def to_row(self):
        return {'kind': 'coverage', 'id': self.inequality_id, 'trials': self.trials,
                'failures': self.failures, 'nominal_level': self.nominal_level,
                'empirical_coverage': self.empirical_coverage,
                'wilson_halfwidth': self.wilson_halfwidth, 'passed': self.passed,
                'estimate': None, 'std_error': None, 'bound': None,
                'params': dict(self.params, **self.notes)}


@dataclass(frozen=True)
class WidthEstimate(object):
    set_id: str
    estimate: float
    std_error: float
    bound: float
    trials: int
    bounds: Dict = field(default_factory=dict)

    def within_bound(self, standard_errors=WIDTH_SLACK_SE):
        return self.estimate <= self.bound + standard_errors * self.std_error

    @property
    def passed(self):
        return self.within_bound()

    def to_row(self):
        return {'kind': 'width', 'id': self.set_id, 'trials': self.trials, 'failures': None,
                'nominal_level': None, 'empirical_coverage': None, 'wilson_halfwidth': None,
                'passed': self.passed, 'estimate': self.estimate,
                'std_error': self.std_error, 'bound': self.bound, 'params': dict(self.bounds)}


def _mean_and_se(values):
    values = np.asarray(values, dtype=float)
    return float(np.mean(values)), float(np.std(values, ddof=1) / math.sqrt(values.size))


def estimate_width_sigma_ball(sigma_matrix, trials, rng):
    """Gaussian width of ``Sigma^{1/2} B_1`` via ``E ||(Sigma^{1/2})^T g||_inf``."""
    if trials < MIN_WIDTH_TRIALS:
        raise PreconditionError('trials', 'need at least %d trials' % MIN_WIDTH_TRIALS)
    sigma = np.asarray(sigma_matrix, dtype=float)
    factor = covariance_factor(sigma)
    d = factor.shape[0]
    rho2 = float(np.max(np.diag(sigma)))
    values = np.max(np.abs(rng.standard_normal((trials, d)).dot(factor)), axis=1)
    estimate, se = _mean_and_se(values)
    bound = math.sqrt(2.0 * rho2 * math.log(d))
    return WidthEstimate('sigma_l1_ball', estimate, se, bound, trials, {'l1_ball': bound})


def l1l2_support(G, l1_radius, l2_radius):
    """Row-wise ``sup <g, x>`` over ``{||x||_1 <= l1_radius, ||x||_2 <= l2_radius}``.

    Uses the dual form ``min_t l1_radius * t + l2_radius * ||(|g| - t)_+||_2``,
    minimised exactly by sorting ``|g|`` and solving one quadratic on the
    active piece.
    """
    G = np.atleast_2d(np.asarray(G, dtype=float))
    a, b = float(l1_radius), float(l2_radius)
    C = -np.sort(-np.abs(G), axis=1)
    rows, n = C.shape
    k = np.arange(1, n + 1, dtype=float)
    P = np.cumsum(C, axis=1)
    Q = np.cumsum(C * C, axis=1)
    nxt = np.concatenate([C[:, 1:], np.zeros((rows, 1))], axis=1)
    S1 = P - k * nxt
    S2 = np.maximum(Q - 2.0 * P * nxt + k * nxt * nxt, 0.0)
    with np.errstate(divide='ignore', invalid='ignore'):
        ratio = np.where(S2 > 0.0, S1 / np.sqrt(S2), np.sqrt(k))
    ratio_target = a / b

    values = b * np.sqrt(Q[:, -1])
    hit = ratio >= ratio_target
    for i in np.flatnonzero(hit.any(axis=1)):
        j = int(np.argmax(hit[i]))
        kk = j + 1.0
        mean = P[i, j] / kk
        var = max(Q[i, j] / kk - mean * mean, 0.0)
        gap = kk - ratio_target ** 2
        if gap > 1e-12 * kk:
            tau = mean - ratio_target * math.sqrt(var / gap)
        else:
            tau = nxt[i, j]
        tau = min(max(tau, nxt[i, j]), C[i, j])
        values[i] = a * tau + b * math.sqrt(kk * (var + (mean - tau) ** 2))
    return values


def l1l2_width_bounds(u):
    u = np.asarray(u, dtype=float)
    n = u.size
    m = int(np.count_nonzero(u))
    l1, l2 = float(np.sum(np.abs(u))), float(np.linalg.norm(u))
    return {'l1_bound': l1 * math.sqrt(2.0 * math.log(n)),
            'sparse_bound': 4.0 * math.sqrt(math.e) * math.sqrt(m)
            * math.sqrt(4.0 + math.log(n / m)) * l2}


def estimate_width_l1l2(u, trials, rng):
    u = np.asarray(u, dtype=float)
    if trials < MIN_WIDTH_TRIALS:
        raise PreconditionError('trials', 'need at least %d trials' % MIN_WIDTH_TRIALS)
    if not np.any(u):
        raise ValueError('u must be nonzero')
    values = l1l2_support(rng.standard_normal((trials, u.size)),
                          np.sum(np.abs(u)), np.linalg.norm(u))
    estimate, se = _mean_and_se(values)
    bounds = l1l2_width_bounds(u)
    return WidthEstimate('l1_l2_intersection', estimate, se, min(bounds.values()), trials, bounds)


def _sparse_width_bound(u):
    if not np.any(u):
        return 0.0
    return min(l1l2_width_bounds(u).values())


def _prepare(params):
    p = dict(params)
    if 'n' not in p:
        raise PreconditionError('params', 'n is required')
    p['n'] = n = int(p['n'])
    p['delta'] = float(p.get('delta', 0.1))
    p['sigma'] = float(p.get('sigma', 1.0))
    if p.get('sigma_matrix') is not None:
        p['sigma_matrix'] = np.asarray(p['sigma_matrix'], dtype=float)
        p['d'] = p['sigma_matrix'].shape[0]
    else:
        p['d'] = int(p.get('d', DEFAULT_D))
        p['sigma_matrix'] = np.eye(p['d'])
    p['rho'] = math.sqrt(float(np.max(np.diag(p['sigma_matrix']))))
    p['factor'] = covariance_factor(p['sigma_matrix'])
    if not 0.0 < p['delta'] < 1.0:
        raise PreconditionError('delta', 'delta must lie in (0, 1), got %r' % p['delta'])
    if n < 2:
        raise PreconditionError('n', 'n must be at least 2')
    return p


def _echo(p):
    echo = dict((k, p[k]) for k in ('n', 'd', 'delta', 'sigma', 'rho') if k in p)
    if 'lambda_o' in p:
        echo['lambda_o'] = p['lambda_o']
    return echo


def _require_c1(p):
    if not (p['delta'] <= 1.0 / 7.0 and p['n'] >= 100):
        raise PreconditionError('c1', 'needs delta <= 1/7 and n >= 100, got delta=%r n=%d'
                                % (p['delta'], p['n']))


def _require_c2(p):
    if math.sqrt(math.log(p['d'] / p['delta']) / p['n']) > math.sqrt(3.0) - math.sqrt(2.0):
        raise PreconditionError('c2', 'sqrt(log(d/delta)/n) exceeds sqrt(3) - sqrt(2)')


def _require_c3(p):
    log_inv = math.log(1.0 / p['delta'])
    if 2.0 * math.sqrt(p['n'] * log_inv) + 2.0 * log_inv > p['n']:
        raise PreconditionError('c3', '2 sqrt(n log(1/delta)) + 2 log(1/delta) exceeds n')


def _require_sample_size(p):
    if p['n'] < 2.0 * math.log(p['d'] / p['delta']):
        raise PreconditionError('n_log', 'needs n >= 2 log(d/delta)')


def _design(p, rng):
    return rng.standard_normal((p['n'], p['d'])).dot(p['factor'])


def _direction_family(p, rng):
    """Columns: random unit, random sparse, canonical, the worst generalised eigenvector."""
    d, factor = p['d'], p['factor']
    directions = [rng.standard_normal(d) for _ in range(p.get('random_directions', 20))]
    for k in sorted(set(min(k, d) for k in (1, 2, 5))):
        for _ in range(p.get('sparse_directions', 10)):
            v = np.zeros(d)
            v[rng.choice(d, size=k, replace=False)] = rng.standard_normal(k)
            directions.append(v)
    for j in (range(d) if d <= 50 else rng.choice(d, size=50, replace=False)):
        directions.append(np.eye(d)[j])
    for v in p.get('extra_directions') or ():
        directions.append(np.asarray(v, dtype=float))
    V = np.array(directions).T
    norms = np.linalg.norm(factor.dot(V), axis=0)
    keep = norms > 0.0
    return V[:, keep] / norms[keep]


def _worst_direction(Z, sigma_matrix):
    try:
        _, vectors = scipy.linalg.eigh(Z.T.dot(Z), sigma_matrix, subset_by_index=[0, 0])
    except np.linalg.LinAlgError:
        return None
    return vectors[:, 0]


def _prop3_trial(p, seed):
    rng = make_rng(seed)
    Z = _design(p, rng)
    V = _direction_family(p, rng)
    worst = _worst_direction(Z, p['sigma_matrix'])
    if worst is not None:
        V = np.column_stack([V, worst])
    n = p['n']
    width = math.sqrt(2.0 * p['rho'] ** 2 * math.log(p['d']))
    lhs = np.linalg.norm(Z.dot(V), axis=0) / math.sqrt(n)
    rhs = (a1_constant(n, p['delta']) * np.linalg.norm(p['factor'].dot(V), axis=0)
           - 1.2 * width / math.sqrt(n) * np.sum(np.abs(V), axis=0))
    return bool(np.any(lhs < rhs - VIOLATION_SLACK * np.maximum(1.0, np.abs(rhs)))), False


def _u_directions(w, rng):
    n = w.size
    directions = [w, np.sign(w), rng.standard_normal(n)]
    order = np.argsort(-np.abs(w), kind='stable')
    for m in sorted(set((1, int(math.ceil(math.sqrt(n))), max(1, n // 10)))):
        u = np.zeros(n)
        u[order[:m]] = w[order[:m]]
        directions.append(u)
    return directions


def bilinear_bound(n, b1, sigma_v_norm, v_l1, u_norm, width, u_width):
    """Right side of the |u^T Z v| / sqrt(n) bound.

    ``width`` bounds the Gaussian width of the design ellipsoid's l1 ball and
    enters at scale 1/n; ``u_width`` bounds the width of the set of vectors with
    the l1 and l2 norms of u and enters at scale 1/sqrt(n).
    """
    return (b1 * sigma_v_norm * u_norm + 1.2 * v_l1 * u_norm * width / n
            + 1.2 * sigma_v_norm * u_width / math.sqrt(n))


def _prop4_trial(p, seed):
    rng = make_rng(seed)
    Z = _design(p, rng)
    n, root_n = p['n'], math.sqrt(p['n'])
    width = math.sqrt(2.0 * p['rho'] ** 2 * math.log(p['d']))
    b1 = b1_constant(n, p['delta'])
    for v in _direction_family(p, rng).T:
        w = Z.dot(v)
        sv = float(np.linalg.norm(p['factor'].dot(v)))
        l1v = float(np.sum(np.abs(v)))
        for u in _u_directions(w, rng):
            u_norm = float(np.linalg.norm(u))
            lhs = abs(float(u.dot(w))) / root_n
            rhs = bilinear_bound(n, b1, sv, l1v, u_norm, width, _sparse_width_bound(u))
            if lhs > rhs + VIOLATION_SLACK * max(1.0, rhs):
                return True, False
    return False, False


def _noise_trial(p, seed):
    rng = make_rng(seed)
    n, sigma = p['n'], p['sigma']
    xi = sigma * rng.standard_normal(n)
    bound = math.sqrt(2.0 * sigma ** 2 * math.log(n / p['delta']) / n)
    return bool(np.max(np.abs(xi)) / math.sqrt(n) > bound), False


def _xtxi_trial(p, seed):
    rng = make_rng(seed)
    n, sigma = p['n'], p['sigma']
    X = _design(p, rng)
    xi = sigma * rng.standard_normal(n)
    bound = 2.0 * math.sqrt(2.0 * sigma ** 2 * p['rho'] ** 2 * math.log(p['d'] / p['delta']) / n)
    return bool(np.max(np.abs(X.T.dot(xi))) / n > bound), False


def _chisq_trial(p, seed):
    rng = make_rng(seed)
    xi = p['sigma'] * rng.standard_normal(p['n'])
    return bool(np.mean(xi * xi) > 2.0 * p['sigma'] ** 2), False


def _bernstein_trial(p, seed):
    rng = make_rng(seed)
    n, sigma, lambda_o = p['n'], p['sigma'], p['lambda_o']
    X = _design(p, rng)
    xi = sigma * rng.standard_normal(n)
    z = X.T.dot(huber_psi(xi / (lambda_o * math.sqrt(n))))
    c_z = math.sqrt(3.0 * p['rho'] ** 2 * sigma ** 2 * math.log(p['d'] / p['delta'])
                    / (lambda_o ** 2 * n))
    return bool(np.max(np.abs(z)) / math.sqrt(n) > c_z), False


def _atp_trial(p, seed):
    rng = make_rng(seed)
    n, d = p['n'], p['d']
    root_n = math.sqrt(n)
    X = _design(p, rng)
    c1 = c_n_delta(a1_constant(n, p['delta']), b1_constant(n, p['delta']))
    c2 = 3.6 * math.sqrt(2.0 * p['rho'] ** 2 * math.log(d) / n)
    c3 = 2.4 * math.sqrt(2.0 * math.log(n) / n)

    def violated(v, u):
        lhs = float(np.linalg.norm(X.dot(v) / root_n + u))
        rhs = (c1 * (float(np.linalg.norm(p['factor'].dot(v))) + float(np.linalg.norm(u)))
               - c2 * float(np.sum(np.abs(v))) - c3 * float(np.sum(np.abs(u))))
        return lhs < rhs - VIOLATION_SLACK * max(1.0, abs(rhs))

    failed = violated(np.zeros(d), np.zeros(n))
    hard = False
    for v in _direction_family(p, rng).T:
        w = X.dot(v) / root_n
        scale = float(np.linalg.norm(w)) / root_n
        directions = [scale * rng.standard_normal(n), np.zeros(n)]
        order = np.argsort(-np.abs(w), kind='stable')
        for m in sorted(set((1, int(math.ceil(math.sqrt(n))), max(1, n // 10)))):
            u = np.zeros(n)
            u[order[:m]] = -w[order[:m]]
            directions.append(u)
        failed = failed or any(violated(v, u) for u in directions)
        hard = hard or violated(v, -w)
    return failed, hard


# inequality id -> (trial, preconditions, nominal level as a function of delta)
INEQUALITIES = {
    'prop3': (_prop3_trial, (_require_c1,), lambda delta: 1.0 - delta),
    'prop4': (_prop4_trial, (_require_c1,), lambda delta: 1.0 - delta),
    'noise_supnorm': (_noise_trial, (_require_sample_size,), lambda delta: (1.0 - delta) ** 3),
    'xtxi_supnorm': (_xtxi_trial, (_require_sample_size,), lambda delta: (1.0 - delta) ** 3),
    'bernstein_z': (_bernstein_trial, (_require_c2,), lambda delta: 1.0 - delta),
    'chisq': (_chisq_trial, (_require_c3,), lambda delta: 1.0 - delta),
}


def _run_trials(trial, p, trials, master_seed, n_jobs):
    results = Parallel(n_jobs=config.worker_count(n_jobs))(
        delayed(trial)(p, derive_seed(master_seed, t)) for t in range(trials))
    return sum(1 for failed, _ in results if failed), sum(1 for _, hard in results if hard)


def verify_inequality(inequality_id, params, trials, rng, n_jobs=None):
    """Monte Carlo coverage of one named inequality.

    Raises:
        PreconditionError: if ``params`` violate the inequality's assumptions;
            the failing condition is named in ``condition``.
    """
    if inequality_id not in INEQUALITIES:
        raise ParameterError('unknown inequality %r, expected one of %s'
                             % (inequality_id, ', '.join(sorted(INEQUALITIES))))
    trial, preconditions, nominal = INEQUALITIES[inequality_id]
    p = _prepare(params)
    for check in preconditions:
        check(p)
    if inequality_id == 'bernstein_z' and p.get('lambda_o') is None:
        p['lambda_o'] = 2.0 * math.sqrt(2.0 * p['sigma'] ** 2 * math.log(p['n'] / p['delta'])
                                        / p['n'])
    master_seed = spawn_seed(rng)
    failures, _ = _run_trials(trial, p, trials, master_seed, n_jobs)
    record = CoverageRecord(inequality_id, trials, failures, nominal(p['delta']), _echo(p))
    logger.info('%s: %d/%d failures, coverage %.4f (nominal %.4f)', inequality_id, failures,
                trials, record.empirical_coverage, record.nominal_level)
    return record


def verify_atp(params, trials, rng, n_jobs=None):
    p = _prepare(params)
    cnd = c_n_delta(a1_constant(p['n'], p['delta']), b1_constant(p['n'], p['delta']))
    if not cnd > 0.0:
        raise PreconditionError('C_n_delta', 'C_n_delta=%.6g is not positive at n=%d delta=%r'
                                % (cnd, p['n'], p['delta']))
    master_seed = spawn_seed(rng)
    failures, hard = _run_trials(_atp_trial, p, trials, master_seed, n_jobs)
    record = CoverageRecord('atp', trials, failures, 1.0 - p['delta'], _echo(p),
                            {'hard_direction_violations': hard, 'C_n_delta': cnd})
    logger.info('atp: %d/%d failures, %d hard-direction violations', failures, trials, hard)
    return record


def measure_c_cut(instance, fit, lambda_o):
    if not instance.has_truth:
        raise PreconditionError('ground_truth', 'instance carries no outlier set')
    return cut_count(instance, fit.beta_hat, lambda_o)


def c_cut_bound(bundle, fit, instance):
    if not (math.isfinite(bundle.C_r) and bundle.C_r > 0.0):
        raise PreconditionError('C_r', 'C_r=%r is not positive' % bundle.C_r)
    if not instance.has_truth:
        raise PreconditionError('ground_truth', 'instance carries no beta_star')
    error = instance.sigma_norm(instance.beta_star - fit.beta_hat)
    n, o, s = bundle.n, bundle.o, bundle.s
    lambda_o, lambda_s = bundle.lambda_o, bundle.lambda_s
    inlier_term = math.sqrt(2.0 * bundle.sigma ** 2) * bundle.g(n - o)
    outlier_term = math.sqrt(o) * lambda_o * bundle.g(o) if o > 0 else 0.0
    sparse_term = math.sqrt(s) * bundle.c_kappa * lambda_s
    return (2.0 * bundle.C_r / lambda_o ** 2) * (inlier_term + outlier_term + sparse_term) * error


@dataclass(frozen=True)
class PenaltyDominance(object):
    lambda_o_needed: float
    lambda_s_needed: float
    lambda_o_ok: bool
    lambda_s_ok: bool

    @property
    def holds(self):
        return self.lambda_o_ok and self.lambda_s_ok


def penalty_dominance(instance, penalties):
    """Whether the penalties dominate the realised noise on ``instance``."""
    if not instance.has_truth:
        raise PreconditionError('ground_truth', 'instance carries no noise vector')
    n = instance.n
    lambda_o_needed = 2.0 / math.sqrt(n) * float(np.max(np.abs(instance.xi)))
    lambda_s_needed = 2.0 / n * float(np.max(np.abs(instance.X.T.dot(instance.xi))))
    return PenaltyDominance(lambda_o_needed, lambda_s_needed,
                            penalties.lambda_o >= lambda_o_needed,
                            penalties.lambda_s >= lambda_s_needed)


def nu_e_check(bundle, fit, instance):
    if not instance.has_truth:
        raise PreconditionError('ground_truth', 'instance carries no ground truth')
    beta_err = instance.sigma_norm(instance.beta_star - fit.beta_hat)
    theta_err = float(np.linalg.norm(instance.theta_star - fit.theta_hat))
    lhs = math.sqrt(beta_err ** 2 + theta_err ** 2)
    return Condition('nu_E', lhs, bundle.nu_E, lhs <= bundle.nu_E, '<=')


def find_c_cut_point(candidates, delta=0.1, c_lambda_o=2.0, kappa=1.0, c0=5.0):
    """First candidate InstanceSpec whose C_cut prerequisites hold, else None."""
    for spec in candidates:
        rho = math.sqrt(float(np.max(np.diag(spec.sigma_matrix()))))
        if spec.s < 1 or spec.sigma <= 0.0:
            continue
        _, bundle = paper_tuning(spec.n, spec.d, spec.s, spec.o, delta, spec.sigma, rho,
                                 c_lambda_o, kappa, c0)
        if condition_report(bundle).c_cut_prerequisites:
            return spec
    return None


def _c_cut_trial(spec_dict, seed, delta, c_lambda_o, kappa, c0, solver_conf):
    # imported here so worker processes only pay for what the trial uses
    from robust_lasso.simulate import InstanceSpec, generate_instance
    from robust_lasso.solver import SolverConfig, solve_huber_lasso

    spec = InstanceSpec.from_dict(dict(spec_dict, seed=seed))
    instance = generate_instance(spec)
    penalties, bundle = paper_tuning(spec.n, spec.d, spec.s, spec.o, delta, spec.sigma,
                                     instance.rho, c_lambda_o, kappa, c0)
    fit = solve_huber_lasso(instance, penalties, SolverConfig(**solver_conf))
    return measure_c_cut(instance, fit, bundle.lambda_o), c_cut_bound(bundle, fit, instance)


def c_cut_study(spec, trials, rng, delta=0.1, c_lambda_o=2.0, kappa=1.0, c0=5.0,
                solver_conf=None, nominal_level=0.95, n_jobs=None):
    """Fraction of trials with measured C_cut at or below its bound.

    When the prerequisites fail at ``spec`` the study still runs and is
    marked ``waived`` in the record notes.
    """
    rho = math.sqrt(float(np.max(np.diag(spec.sigma_matrix()))))
    _, bundle = paper_tuning(spec.n, spec.d, spec.s, spec.o, delta, spec.sigma, rho,
                             c_lambda_o, kappa, c0)
    waived = not condition_report(bundle).c_cut_prerequisites
    if waived:
        logger.warning('C_cut prerequisites fail at n=%d o=%d; result is indicative only',
                       spec.n, spec.o)
    master_seed = spawn_seed(rng)
    results = Parallel(n_jobs=config.worker_count(n_jobs))(
        delayed(_c_cut_trial)(spec.to_dict(), derive_seed(master_seed, t), delta,
                              c_lambda_o, kappa, c0, dict(solver_conf or {}))
        for t in range(trials))
    failures = sum(1 for measured, bound in results if measured > bound)
    params = {'n': spec.n, 'd': spec.d, 's': spec.s, 'o': spec.o, 'delta': delta,
              'C_lambda_o': c_lambda_o}
    notes = {'waived': waived, 'max_c_cut': max([m for m, _ in results] or [0])}
    return CoverageRecord('c_cut', trials, failures, nominal_level, params, notes)


def _project_l1(v, radius):
    if np.sum(np.abs(v)) <= radius:
        return v
    if radius <= 0.0:
        return np.zeros_like(v)
    u = np.sort(np.abs(v))[::-1]
    css = np.cumsum(u)
    k = np.arange(1, u.size + 1)
    rho = k[u - (css - radius) / k > 0.0][-1]
    tau = (css[rho - 1] - radius) / rho
    return np.sign(v) * np.maximum(np.abs(v) - tau, 0.0)


def _cone_minimum(factor, support, v_support, c0):
    """``min ||F v|| / ||v_J||`` over the cone with ``v_J`` fixed."""
    d = factor.shape[1]
    mask = np.zeros(d, dtype=bool)
    mask[support] = True
    base = np.zeros(d)
    base[support] = v_support
    anchor = factor.dot(base)
    rest = factor[:, ~mask]
    radius = c0 * float(np.sum(np.abs(v_support)))
    if rest.shape[1] == 0:
        return float(np.linalg.norm(anchor)) / float(np.linalg.norm(v_support))
    lipschitz = float(np.linalg.norm(rest, 2)) ** 2
    if lipschitz == 0.0:
        return float(np.linalg.norm(anchor)) / float(np.linalg.norm(v_support))
    w = np.zeros(rest.shape[1])
    z, t = w, 1.0
    for _ in range(CONE_ITERATIONS):
        grad = rest.T.dot(anchor + rest.dot(z))
        w_next = _project_l1(z - grad / lipschitz, radius)
        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        z = w_next + ((t - 1.0) / t_next) * (w_next - w)
        if np.max(np.abs(w_next - w), initial=0.0) <= 1e-13:
            w = w_next
            break
        w, t = w_next, t_next
    return float(np.linalg.norm(anchor + rest.dot(w))) / float(np.linalg.norm(v_support))


def estimate_re_kappa(sigma_matrix, s, c0, samples, rng):
    """Sampled estimate of the restricted eigenvalue constant.

    The minimum over sampled cone directions can only overestimate the true
    constant, so the result is an upper bound on kappa. For small problems
    (d <= 8, s <= 2) the best sample per support is refined: the off-support
    part is minimised exactly and, for two-element supports, the direction
    on the support is tuned by a bounded scalar search.
    """
    if samples < MIN_KAPPA_SAMPLES:
        raise PreconditionError('samples', 'need at least %d samples' % MIN_KAPPA_SAMPLES)
    factor = covariance_factor(sigma_matrix)
    d = factor.shape[0]
    if not 1 <= s <= d:
        raise ValueError('s must lie in [1, d], got %r' % s)

    best = math.inf
    per_support = {}
    for _ in range(samples):
        k = int(rng.integers(1, s + 1))
        support = tuple(sorted(int(j) for j in rng.choice(d, size=k, replace=False)))
        v_support = rng.standard_normal(k)
        v = np.zeros(d)
        v[list(support)] = v_support
        off = np.setdiff1d(np.arange(d), support)
        if off.size and rng.random() >= 0.25:
            direction = rng.standard_normal(off.size)
            radius = rng.random() * c0 * float(np.sum(np.abs(v_support)))
            v[off] = radius * direction / float(np.sum(np.abs(direction)))
        ratio = float(np.linalg.norm(factor.dot(v))) / float(np.linalg.norm(v_support))
        best = min(best, ratio)
        if support not in per_support or ratio < per_support[support][0]:
            per_support[support] = (ratio, v_support)

    if d <= REFINE_DIMENSION and s <= REFINE_SPARSITY:
        ranked = sorted(per_support.items(), key=lambda item: item[1][0])[:REFINE_LIMIT * d]
        for support, (_, v_support) in ranked:
            best = min(best, _refine(factor, support, v_support, c0))
    return best


def _refine(factor, support, v_support, c0):
    if len(support) == 1:
        return _cone_minimum(factor, support, np.ones(1), c0)
    phi0 = math.atan2(v_support[1], v_support[0])

    def objective(phi):
        return _cone_minimum(factor, support, np.array([math.cos(phi), math.sin(phi)]), c0)

    result = scipy.optimize.minimize_scalar(objective, bounds=(phi0 - math.pi / 2.0,
                                                                 phi0 + math.pi / 2.0),
                                            method='bounded')
    return min(float(result.fun), objective(phi0))


SUITE_RUNNERS = {
    'atp': lambda entry, rng, n_jobs: verify_atp(entry['params'], entry['trials'], rng, n_jobs),
    'width_sigma_ball': lambda entry, rng, n_jobs: estimate_width_sigma_ball(
        entry['params'].get('sigma_matrix') if entry['params'].get('sigma_matrix') is not None
        else np.eye(int(entry['params']['d'])), entry['trials'], rng),
    'width_l1l2': lambda entry, rng, n_jobs: estimate_width_l1l2(
        entry['params']['u'], entry['trials'], rng),
}


def run_suite(entries, master_seed, default_trials=2000, n_jobs=None):
    """Run a list of ``{'id': ..., 'params': {...}, 'trials': ...}`` entries.

    Entry ``i`` draws from ``derive_seed(master_seed, i)``, so adding an
    entry at the end leaves earlier results unchanged.
    """
    records = []
    for index, raw in enumerate(entries):
        entry = {'id': raw['id'], 'params': dict(raw.get('params') or {}),
                 'trials': int(raw.get('trials') or default_trials)}
        rng = make_rng(derive_seed(master_seed, index))
        if entry['id'] in SUITE_RUNNERS:
            records.append(SUITE_RUNNERS[entry['id']](entry, rng, n_jobs))
        else:
            records.append(verify_inequality(entry['id'], entry['params'], entry['trials'],
                                             rng, n_jobs))
    return records
