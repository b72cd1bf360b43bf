"""Tuning constants, rate constants and feasibility conditions.

Everything here is closed-form arithmetic. ``paper_tuning`` builds the
penalty pair in dependency order (lambda_o, then C_z, then g(o), C_lambda_s
and finally lambda_s) and returns every intermediate constant in a
:class:`TuningBundle` so that reports can show the margins, not only the
verdicts.
"""
import logging
import math
from dataclasses import asdict, dataclass
from typing import Optional

import scipy.optimize

from robust_lasso.core import ParameterError, PenaltyPair, Provenance

logger = logging.getLogger(__name__)

DEFAULT_KAPPA = 1.0
DEFAULT_C0 = 5.0
MIN_C_LAMBDA_O = 2.0
LAMBDA_S_FACTOR = 4.0 * math.sqrt(2.0) / math.sqrt(3.0)
C_N_DELTA_UPPER = (math.sqrt(5.0) - math.sqrt(2.0)) / 2.0
C_N_DELTA_LOWER = math.sqrt(17.0 / 16.0) - 1.0
C_ON = (19.2 * math.sqrt(12.5)) ** 2 * math.log(100.0) / C_N_DELTA_UPPER
ETA_BAR_4 = math.sqrt((4.0 + math.log(C_ON)) / math.log(C_ON))
WIDTH_FACTOR = 4.8 * math.sqrt(math.e)
ATP_ALPHA = 0.5


def _require(ok, message, *args):
    if not ok:
        raise ParameterError(message % args)


@dataclass(frozen=True)
class RateConstants(object):
    r1: float
    r21: float
    r22: float
    r2: float
    r_total: float
    eta_delta: float
    eta_4: Optional[float]
    r_baseline: float


def rate_constants(n, d, s, o, delta):
    _require(n >= 3, 'n must be at least 3, got %r', n)
    _require(d >= 3, 'd must be at least 3, got %r', d)
    _require(1 <= s <= d, 's must lie in [1, d], got %r', s)
    _require(0 <= o < n, 'o must lie in [0, n), got %r', o)
    _require(0.0 < delta <= 1.0, 'delta must lie in (0, 1], got %r', delta)

    r1 = math.sqrt(s * math.log(d) / n)
    if o == 0:
        r21 = r22 = 0.0
        eta_4 = None
    else:
        r21 = math.sqrt((o / n) * math.log(n / o))
        r22 = math.sqrt((o / n) * math.log(n))
        eta_4 = math.sqrt((4.0 + math.log(n / o)) / math.log(n / o))
    r2 = r21 * r22
    return RateConstants(
        r1=r1, r21=r21, r22=r22, r2=r2, r_total=r1 + r2,
        eta_delta=math.sqrt(math.log(n / delta) / math.log(n)),
        eta_4=eta_4,
        r_baseline=r1 + math.sqrt(o * math.log(n) / n))


def eta_delta_cap(delta):
    """Upper bound of eta_delta valid for every n >= 100."""
    return math.sqrt(math.log(100.0 / delta) / math.log(100.0))


def a1_constant(n, delta):
    return 1.0 - (4.3 + math.sqrt(2.0 * math.log(9.0 / delta))) / math.sqrt(n)


def b1_constant(n, delta):
    return math.sqrt(2.0 / n) * (4.8 + math.sqrt(math.log(81.0 / delta)))


def c_n_delta(a1, b1, alpha=ATP_ALPHA):
    return math.sqrt(a1 * a1 + b1 + alpha * alpha) - math.sqrt(2.0 * (b1 + alpha * alpha))


def c_kappa_constant(kappa, c0):
    return (c0 + 1.0) / kappa + 1.0


def _g1(n, s, d, delta, rho, c_kappa):
    return (math.sqrt(2.0 / n) * (4.8 + math.sqrt(math.log(81.0 / delta)))
            + 1.2 * c_kappa * math.sqrt(2.0 * rho * rho * s * math.log(d) / n))


def _g2(m, n):
    if m == 0:
        return 0.0
    return WIDTH_FACTOR * math.sqrt(m / n) * math.sqrt(4.0 + math.log(n / m))


def g_function(m, n, s, d, delta, rho, c_kappa):
    _require(1 <= m <= n, 'm must lie in [1, n], got %r', m)
    return _g1(n, s, d, delta, rho, c_kappa) + _g2(m, n)


def c_gt(c_lambda_o, eta_bar_4=ETA_BAR_4):
    c = c_lambda_o
    return 9.0 / 32.0 - 2.0 * 9.6 ** 2 * math.e * eta_bar_4 * c / (c * c - 1.0)


def default_c_lambda_o(eta_bar_4=ETA_BAR_4):
    """Smallest C_lambda_o >= 2 with a positive C_gt, by bisection."""
    if c_gt(MIN_C_LAMBDA_O, eta_bar_4) > 0.0:
        return MIN_C_LAMBDA_O
    hi = 2.0 * MIN_C_LAMBDA_O
    while c_gt(hi, eta_bar_4) <= 0.0:
        hi *= 2.0
    root = scipy.optimize.brentq(lambda c: c_gt(c, eta_bar_4), MIN_C_LAMBDA_O, hi, xtol=1e-12)
    while c_gt(root, eta_bar_4) <= 0.0:
        root = math.nextafter(root, math.inf)
    return root


@dataclass(frozen=True)
class TuningBundle(object):
    n: int
    d: int
    s: int
    o: int
    delta: float
    sigma: float
    rho: float
    kappa: float
    c0: float
    lambda_o: float
    lambda_s: float
    C_lambda_o: float
    C_z: float
    g1: float
    g_o: float
    C_lambda_s: float
    a1: float
    b1: float
    C_n_delta: float
    nu_E: float
    c_kappa: float
    C_r: float
    C_gt: float
    eta_bar_4: float
    C_on: float
    rates: Optional[RateConstants]

    def g2(self, m):
        return _g2(m, self.n)

    def g(self, m):
        if m == 0:
            return self.g1
        return g_function(m, self.n, self.s, self.d, self.delta, self.rho, self.c_kappa)

    @property
    def penalties(self):
        return PenaltyPair(self.lambda_s, self.lambda_o, Provenance.PAPER_RECIPE)

    def to_dict(self):
        out = {}
        for key, value in asdict(self).items():
            if isinstance(value, float) and not math.isfinite(value):
                value = None
            out[key] = value
        return out


def paper_tuning(n, d, s, o, delta, sigma, rho, C_lambda_o=None, kappa=DEFAULT_KAPPA,
                 c0=DEFAULT_C0):
    """Penalty pair of the outlier-robust recipe plus every constant it uses.

    Args:
        n, d, s, o: sample size, dimension, sparsity and outlier count.
        delta: confidence parameter in (0, 1].
        sigma: noise standard deviation, must be positive.
        rho: square root of the largest diagonal entry of the covariance.
        C_lambda_o: lambda_o multiplier; None picks :func:`default_c_lambda_o`.
        kappa: restricted eigenvalue constant.
        c0: cone constant of the restricted eigenvalue condition.

    Returns:
        (PenaltyPair, TuningBundle)
    """
    _require(n >= 2, 'n must be at least 2, got %r', n)
    _require(d >= 1, 'd must be at least 1, got %r', d)
    _require(s >= 1, 's must be at least 1 (C_lambda_s divides by s), got %r', s)
    _require(s <= d, 's must not exceed d, got s=%r d=%r', s, d)
    _require(0 <= o < n, 'o must lie in [0, n), got %r', o)
    _require(0.0 < delta <= 1.0, 'delta must lie in (0, 1], got %r', delta)
    _require(sigma > 0.0, 'sigma must be positive, got %r', sigma)
    _require(rho > 0.0, 'rho must be positive, got %r', rho)
    _require(kappa > 0.0 and c0 > 0.0, 'kappa and c0 must be positive')
    if C_lambda_o is None:
        C_lambda_o = default_c_lambda_o()
    _require(C_lambda_o > 1.0, 'C_lambda_o must exceed 1, got %r', C_lambda_o)

    lambda_o = C_lambda_o * math.sqrt(2.0 * sigma ** 2 * math.log(n / delta) / n)
    C_z = math.sqrt(3.0 * rho ** 2 * sigma ** 2 * math.log(d / delta) / (lambda_o ** 2 * n))
    c_kappa = c_kappa_constant(kappa, c0)
    g1 = _g1(n, s, d, delta, rho, c_kappa)
    g_o = g1 + _g2(o, n)
    C_lambda_s = C_z + math.sqrt(2.0 * o / s) * g_o
    lambda_s = LAMBDA_S_FACTOR * C_lambda_s * lambda_o

    a1 = a1_constant(n, delta)
    b1 = b1_constant(n, delta)
    cnd = c_n_delta(a1, b1)
    if cnd > 0.0:
        nu_E = (6.0 / cnd ** 2) * math.sqrt(lambda_s ** 2 * s / kappa ** 2
                                            + 6.25 * lambda_o ** 2 * o)
    else:
        nu_E = math.inf
    denominator = 1.0 - 2.0 * sigma ** 2 * math.log(n / delta) / (lambda_o ** 2 * n)
    C_r = 1.0 / denominator if denominator > 0.0 else math.inf

    rates = rate_constants(n, d, s, o, delta) if n >= 3 and d >= 3 else None
    bundle = TuningBundle(
        n=n, d=d, s=s, o=o, delta=delta, sigma=sigma, rho=rho, kappa=kappa, c0=c0,
        lambda_o=lambda_o, lambda_s=lambda_s, C_lambda_o=C_lambda_o, C_z=C_z, g1=g1,
        g_o=g_o, C_lambda_s=C_lambda_s, a1=a1, b1=b1, C_n_delta=cnd, nu_E=nu_E,
        c_kappa=c_kappa, C_r=C_r, C_gt=c_gt(C_lambda_o), eta_bar_4=ETA_BAR_4, C_on=C_ON,
        rates=rates)
    logger.debug('recipe tuning n=%d d=%d s=%d o=%d: lambda_o=%.6g lambda_s=%.6g',
                 n, d, s, o, lambda_o, lambda_s)
    return bundle.penalties, bundle


def nguyen_tran_tuning(n, d, sigma, rho, gamma=1.0):
    _require(0.0 < gamma <= 1.0, 'gamma must lie in (0, 1], got %r', gamma)
    _require(n >= 2 and d >= 1, 'need n >= 2 and d >= 1, got n=%r d=%r', n, d)
    _require(sigma >= 0.0 and rho > 0.0, 'need sigma >= 0 and rho > 0')
    lambda_o = 2.0 * math.sqrt(2.0 * sigma ** 2 * math.log(n) / n)
    lambda_s = ((2.0 / gamma) * math.sqrt(2.0 * sigma ** 2 * rho ** 2 * math.log(d) / n)
                * (1.0 + math.sqrt(2.0 * math.log(d) / n)))
    penalties = PenaltyPair(lambda_s, lambda_o, Provenance.NGUYEN_TRAN)
    if penalties.degenerate:
        logger.warning('baseline tuning is degenerate (sigma=%r): lambda_o=%r lambda_s=%r',
                       sigma, lambda_o, lambda_s)
    return penalties


def plain_lasso_lambda(n, d, delta, sigma, rho):
    """lambda_s of the robust recipe with no outliers; used for the plain Lasso baseline."""
    _require(n >= 2 and d >= 1, 'need n >= 2 and d >= 1, got n=%r d=%r', n, d)
    _require(0.0 < delta <= 1.0, 'delta must lie in (0, 1], got %r', delta)
    return 4.0 * math.sqrt(2.0) * math.sqrt(rho ** 2 * sigma ** 2 * math.log(d / delta) / n)


@dataclass(frozen=True)
class Condition(object):
    name: str
    lhs: float
    rhs: float
    holds: bool
    relation: str
    note: str = ''

    def to_dict(self):
        out = asdict(self)
        for key in ('lhs', 'rhs'):
            if not math.isfinite(out[key]):
                out[key] = None
        return out


@dataclass(frozen=True)
class ConditionReport(object):
    c1: Condition
    c2: Condition
    c3: Condition
    c4: Condition
    c5: Condition
    cond_iso: Condition
    cond0: Condition
    cond_Cgt_positive: Condition
    lambda_gap: Condition
    C_r_positive: Condition

    def conditions(self):
        return (self.c1, self.c2, self.c3, self.c4, self.c5, self.cond_iso, self.cond0,
                self.cond_Cgt_positive, self.lambda_gap, self.C_r_positive)

    @property
    def all_satisfied(self):
        return all(c.holds for c in self.conditions())

    @property
    def c_cut_prerequisites(self):
        return all(c.holds for c in (self.c1, self.c2, self.c3, self.cond_iso,
                                     self.lambda_gap, self.C_r_positive))

    def to_dict(self):
        out = dict((c.name, c.to_dict()) for c in self.conditions())
        out['all_satisfied'] = self.all_satisfied
        return out


def condition_report(bundle, n=None, d=None, s=None, o=None, delta=None, kappa=None, c0=None):
    """Evaluate every feasibility condition, both sides included.

    The optional arguments must agree with the values the bundle was built
    with; they exist so callers can state the point they believe they are at.
    """
    given = dict(n=n, d=d, s=s, o=o, delta=delta, kappa=kappa, c0=c0)
    for key, value in given.items():
        if value is not None and value != getattr(bundle, key):
            raise ParameterError('bundle was computed for %s=%r, not %r'
                                 % (key, getattr(bundle, key), value))
    n, d, s, o, delta = bundle.n, bundle.d, bundle.s, bundle.o, bundle.delta
    kappa, c0, rho = bundle.kappa, bundle.c0, bundle.rho
    lambda_s, lambda_o = bundle.lambda_s, bundle.lambda_o

    c1 = Condition('c1', delta, 1.0 / 7.0, 0.0 < delta <= 1.0 / 7.0 and n >= 100, '<=',
                   'n=%d, needs n >= 100' % n)
    c2_lhs = math.sqrt(math.log(d / delta) / n)
    c2 = Condition('c2', c2_lhs, math.sqrt(3.0) - math.sqrt(2.0),
                   c2_lhs <= math.sqrt(3.0) - math.sqrt(2.0), '<=')
    log_inv = math.log(1.0 / delta)
    c3_lhs = 2.0 * math.sqrt(n * log_inv) + 2.0 * log_inv
    c3 = Condition('c3', c3_lhs, float(n), c3_lhs <= n, '<=')
    c4 = Condition('c4', bundle.a1, 0.75, bundle.a1 > 0.75, '>')
    c5 = Condition('c5', bundle.b1, 0.25, bundle.b1 < 0.25, '<')

    gap = lambda_s - bundle.C_lambda_s * lambda_o
    iso_lhs = (lambda_s + bundle.C_lambda_s * lambda_o) / gap if gap > 0.0 else math.inf
    cond_iso = Condition('cond_iso', iso_lhs, c0, iso_lhs <= c0, '<=')

    design_term = 3.6 * math.sqrt(2.0 * rho ** 2 * math.log(d) / n)
    outlier_term = 2.4 * (lambda_s / lambda_o) * math.sqrt(2.0 * math.log(n) / n)
    cond0_lhs = (8.0 * max(design_term, outlier_term)
                 * math.sqrt(s / kappa ** 2 + 6.25 * o * lambda_o ** 2 / lambda_s ** 2))
    cond0 = Condition('cond0', cond0_lhs, bundle.C_n_delta, cond0_lhs <= bundle.C_n_delta, '<=')

    cgt = Condition('cond_Cgt_positive', bundle.C_gt, 0.0, bundle.C_gt > 0.0, '>')
    lambda_gap = Condition('lambda_gap', gap, 0.0, gap > 0.0, '>')
    c_r = Condition('C_r_positive', bundle.C_r, 0.0,
                    math.isfinite(bundle.C_r) and bundle.C_r > 0.0 and bundle.C_lambda_o > 1.0,
                    '>')
    return ConditionReport(c1, c2, c3, c4, c5, cond_iso, cond0, cgt, lambda_gap, c_r)


@dataclass(frozen=True)
class Cond0Terms(object):
    A1B1: float
    A1B2: float
    A2B1: float
    A2B2: float

    @property
    def total(self):
        return self.A1B1 + self.A1B2 + self.A2B1 + self.A2B2


def cond0_decomposition(n, d, s, o, penalties):
    if penalties.degenerate:
        raise ParameterError('penalties must be strictly positive')
    ratio = penalties.lambda_s ** 2 / penalties.lambda_o ** 2
    A1 = math.log(d) / n
    A2 = ratio * math.log(n) / n
    B1 = float(s)
    B2 = o / ratio
    return Cond0Terms(A1B1=A1 * B1, A1B2=A1 * B2, A2B1=A2 * B1, A2B2=A2 * B2)
