"""Huber-loss primitives and the value types shared across the package.

The Huber threshold is fixed at 1; the residual scale lives entirely in
``lambda_o * sqrt(n)`` (see :func:`residual_scaled`).
"""
import enum
import functools
import logging
from dataclasses import dataclass, field, replace
from typing import Optional, Tuple

import numpy as np
import scipy.linalg

logger = logging.getLogger(__name__)

MIN_PSI = -1.0
MAX_PSI = 1.0
RECONSTRUCTION_RTOL = 1e-10
PSD_TOLERANCE = 1e-10


class InstanceError(ValueError):
    pass


class NonFiniteError(InstanceError):
    pass


class ParameterError(ValueError):
    pass


def _finite_array(values, what):
    arr = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError('%s received a non-finite value' % what)
    return arr


def _like_input(t, result):
    if np.ndim(t) == 0:
        return float(result)
    return result


def huber_value(t):
    """Huber loss with unit threshold, elementwise.

    Args:
        t: finite scalar or array.

    Returns:
        ``t**2 / 2`` where ``|t| <= 1`` and ``|t| - 1/2`` elsewhere. Scalars in,
        float out.
    """
    a = _finite_array(t, 'huber_value')
    abs_a = np.abs(a)
    return _like_input(t, np.where(abs_a <= 1.0, 0.5 * a * a, abs_a - 0.5))


def huber_psi(t):
    """Derivative of :func:`huber_value`: ``t`` clamped to ``[-1, 1]``."""
    a = _finite_array(t, 'huber_psi')
    return _like_input(t, np.clip(a, MIN_PSI, MAX_PSI))


def covariance_factor(sigma_matrix):
    """Return ``F`` with ``F.T @ F == sigma_matrix``.

    Cholesky is tried first. Singular but PSD matrices fall back to an eigen
    factor. Coordinates with zero variance get an exactly zero column so that
    the matching design column is identically zero.

    Raises:
        InstanceError: if the matrix is not square, symmetric and PSD.
    """
    sigma = _finite_array(sigma_matrix, 'covariance_factor')
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise InstanceError('covariance must be square, got shape %s' % (sigma.shape,))
    scale = max(1.0, float(np.max(np.abs(sigma))) if sigma.size else 1.0)
    if not np.allclose(sigma, sigma.T, rtol=0.0, atol=PSD_TOLERANCE * scale):
        raise InstanceError('covariance is not symmetric')

    d = sigma.shape[0]
    factor = np.zeros((d, d))
    active = np.flatnonzero(np.diag(sigma) > 0.0)
    if np.any(np.diag(sigma) < 0.0):
        raise InstanceError('covariance has a negative diagonal entry')
    if active.size == 0:
        return factor

    block = sigma[np.ix_(active, active)]
    try:
        upper = scipy.linalg.cholesky(block, lower=False)
    except np.linalg.LinAlgError:
        w, v = scipy.linalg.eigh(block)
        if w[0] < -PSD_TOLERANCE * scale:
            raise InstanceError('covariance is not positive semidefinite '
                                '(smallest eigenvalue %.3g)' % w[0])
        upper = (v * np.sqrt(np.clip(w, 0.0, None))).T
    factor[np.ix_(active, active)] = upper
    return factor


class Provenance(enum.Enum):
    PAPER_RECIPE = 'paper_recipe'
    NGUYEN_TRAN = 'nguyen_tran'
    MANUAL = 'manual'


@dataclass(frozen=True)
class PenaltyPair(object):
    """The two tuning parameters of the robust Lasso.

    A zero entry is allowed only to carry a degenerate recipe (zero noise);
    solvers refuse such pairs.
    """
    lambda_s: float
    lambda_o: float
    provenance: Provenance = Provenance.MANUAL

    def __post_init__(self):
        for name in ('lambda_s', 'lambda_o'):
            value = float(getattr(self, name))
            if not np.isfinite(value) or value < 0.0:
                raise ParameterError('%s must be finite and nonnegative, got %r' % (name, value))
            object.__setattr__(self, name, value)
        object.__setattr__(self, 'provenance', Provenance(self.provenance))

    @property
    def degenerate(self):
        return self.lambda_s == 0.0 or self.lambda_o == 0.0

    def to_dict(self):
        return {'lambda_s': self.lambda_s, 'lambda_o': self.lambda_o,
                'provenance': self.provenance.value}


def _frozen(values, what, ndim):
    arr = np.array(_finite_array(values, what), dtype=float)
    if arr.ndim != ndim:
        raise InstanceError('%s must be %d-dimensional, got shape %s' % (what, ndim, arr.shape))
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ProblemInstance(object):
    """Design, outputs and (optionally) the ground truth that produced them.

    ``y = X @ beta_star + sqrt(n) * theta_star + xi``. Instances read from
    disk without truth carry only ``X`` and ``y``.
    """
    X: np.ndarray
    y: np.ndarray
    sigma_matrix: Optional[np.ndarray] = None
    y_clean: Optional[np.ndarray] = None
    beta_star: Optional[np.ndarray] = None
    theta_star: Optional[np.ndarray] = None
    xi: Optional[np.ndarray] = None
    sigma: Optional[float] = None
    outlier_index: Tuple[int, ...] = field(default=())

    def __post_init__(self):
        X = _frozen(self.X, 'X', 2)
        n, d = X.shape
        y = _frozen(self.y, 'y', 1)
        if y.shape[0] != n:
            raise InstanceError('y has %d entries but X has %d rows' % (y.shape[0], n))
        object.__setattr__(self, 'X', X)
        object.__setattr__(self, 'y', y)

        sigma_matrix = np.eye(d) if self.sigma_matrix is None else self.sigma_matrix
        sigma_matrix = _frozen(sigma_matrix, 'sigma_matrix', 2)
        if sigma_matrix.shape != (d, d):
            raise InstanceError('sigma_matrix must be %dx%d, got %s' % (d, d, sigma_matrix.shape))
        if np.max(np.diag(sigma_matrix)) <= 0.0:
            raise InstanceError('sigma_matrix needs a positive diagonal entry')
        object.__setattr__(self, 'sigma_matrix', sigma_matrix)

        if self.sigma is not None:
            sigma = float(self.sigma)
            if not np.isfinite(sigma) or sigma < 0.0:
                raise InstanceError('sigma must be finite and nonnegative, got %r' % sigma)
            object.__setattr__(self, 'sigma', sigma)

        truth = (self.beta_star, self.theta_star, self.xi)
        if all(part is None for part in truth):
            if self.y_clean is not None:
                object.__setattr__(self, 'y_clean', _frozen(self.y_clean, 'y_clean', 1))
            object.__setattr__(self, 'outlier_index', ())
            return
        if any(part is None for part in truth):
            raise InstanceError('beta_star, theta_star and xi must be given together')

        beta_star = _frozen(self.beta_star, 'beta_star', 1)
        theta_star = _frozen(self.theta_star, 'theta_star', 1)
        xi = _frozen(self.xi, 'xi', 1)
        if beta_star.shape[0] != d:
            raise InstanceError('beta_star has %d entries, expected %d' % (beta_star.shape[0], d))
        if theta_star.shape[0] != n or xi.shape[0] != n:
            raise InstanceError('theta_star and xi must have %d entries' % n)

        y_clean = X.dot(beta_star) + xi if self.y_clean is None else self.y_clean
        y_clean = _frozen(y_clean, 'y_clean', 1)
        gap = np.max(np.abs(y - y_clean - np.sqrt(n) * theta_star), initial=0.0)
        clean_gap = np.max(np.abs(y_clean - X.dot(beta_star) - xi), initial=0.0)
        scale = max(1.0, float(np.max(np.abs(y), initial=0.0)))
        if max(gap, clean_gap) > RECONSTRUCTION_RTOL * scale:
            raise InstanceError('y does not reconstruct from the ground truth (gap %.3g)'
                                % max(gap, clean_gap))

        outliers = tuple(int(i) for i in np.flatnonzero(theta_star))
        if self.outlier_index and tuple(sorted(self.outlier_index)) != outliers:
            raise InstanceError('outlier_index disagrees with the support of theta_star')

        object.__setattr__(self, 'beta_star', beta_star)
        object.__setattr__(self, 'theta_star', theta_star)
        object.__setattr__(self, 'xi', xi)
        object.__setattr__(self, 'y_clean', y_clean)
        object.__setattr__(self, 'outlier_index', outliers)

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def d(self):
        return self.X.shape[1]

    @property
    def has_truth(self):
        return self.beta_star is not None

    @property
    def s(self):
        return int(np.count_nonzero(self.beta_star)) if self.has_truth else None

    @property
    def o(self):
        return len(self.outlier_index)

    @property
    def rho(self):
        return float(np.sqrt(np.max(np.diag(self.sigma_matrix))))

    @property
    def inlier_index(self):
        mask = np.ones(self.n, dtype=bool)
        mask[list(self.outlier_index)] = False
        return np.flatnonzero(mask)

    @functools.cached_property
    def sigma_factor(self):
        return covariance_factor(self.sigma_matrix)

    def sigma_norm(self, v):
        """``||Sigma^{1/2} v||_2`` through the stored factor."""
        return float(np.linalg.norm(self.sigma_factor.dot(np.asarray(v, dtype=float))))


@dataclass(frozen=True, eq=False)
class FitResult(object):
    beta_hat: np.ndarray
    theta_hat: np.ndarray
    objective_trace: Tuple[float, ...]
    kkt_residual: float
    iterations: int
    converged: bool
    c_cut: Optional[int] = None
    method: str = 'huber'

    @property
    def objective(self):
        return self.objective_trace[-1]

    def with_c_cut(self, count):
        return replace(self, c_cut=int(count))


def _check_beta(instance, beta):
    beta = _finite_array(beta, 'beta')
    if beta.shape != (instance.d,):
        raise InstanceError('beta must have shape (%d,), got %s' % (instance.d, beta.shape))
    return beta


def residual_scaled(instance, beta, lambda_o):
    """Scaled residuals ``(y_i - X_i^T beta) / (lambda_o sqrt(n))``."""
    if not lambda_o > 0.0:
        raise ParameterError('lambda_o must be positive, got %r' % lambda_o)
    beta = _check_beta(instance, beta)
    return (instance.y - instance.X.dot(beta)) / (lambda_o * np.sqrt(instance.n))


def cut_count(instance, beta, lambda_o):
    """Number of uncontaminated samples whose scaled residual leaves ``[-1, 1]``."""
    if not instance.has_truth:
        raise InstanceError('cut count needs the ground-truth outlier set')
    r = residual_scaled(instance, beta, lambda_o)
    return int(np.count_nonzero(np.abs(r[instance.inlier_index]) > 1.0))
