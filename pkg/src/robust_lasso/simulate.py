"""Synthetic instances: Gaussian designs, sparse truths and output contamination.

Draw order inside :func:`generate_instance` is fixed: design, support of
beta*, signs of beta*, noise, then whatever the adversary draws. Changing it
changes every instance for a given seed.
"""
import csv
import enum
import json
import logging
import math
import os
import re
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from robust_lasso.core import InstanceError, ProblemInstance, covariance_factor
from robust_lasso.seeding import make_rng

logger = logging.getLogger(__name__)

FLOAT_FORMAT = '%.17g'
X_FILE = 'X.csv'
Y_FILE = 'y.csv'
TRUTH_FILE = 'truth.csv'
SIGMA_FILE = 'sigma.csv'
METADATA_FILE = 'metadata.json'
Y_HEADER = ['y', 'y_clean']
TRUTH_HEADER = ['component', 'index', 'value']
TRUTH_COMPONENTS = ('beta_star', 'theta_star', 'xi')


class CovarianceKind(enum.Enum):
    IDENTITY = 'identity'
    EQUICORRELATED = 'equicorrelated'
    TOEPLITZ = 'toeplitz'
    EXPLICIT = 'explicit'


class AdversaryKind(enum.Enum):
    NONE = 'none'
    OBLIVIOUS_CONSTANT = 'oblivious_constant'
    SIGN_FLIP_LARGE = 'sign_flip_large'
    RESIDUAL_ALIGNED = 'residual_aligned'
    LEVERAGE_TARGETED = 'leverage_targeted'


PARAMETRISED = (AdversaryKind.OBLIVIOUS_CONSTANT, AdversaryKind.RESIDUAL_ALIGNED,
                AdversaryKind.LEVERAGE_TARGETED)
_ADVERSARY_PATTERN = re.compile(r'^\s*(\w+)\s*(?:\(\s*([^)]*?)\s*\))?\s*$')


@dataclass(frozen=True)
class Adversary(object):
    """A contamination strategy and its single parameter (constant or scale)."""
    kind: AdversaryKind = AdversaryKind.NONE
    param: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, 'kind', AdversaryKind(self.kind))
        object.__setattr__(self, 'param', float(self.param))
        if not math.isfinite(self.param):
            raise InstanceError('adversary parameter must be finite')
        if self.kind is AdversaryKind.OBLIVIOUS_CONSTANT and self.param == 0.0:
            raise InstanceError('oblivious_constant needs a nonzero constant')
        if self.kind in (AdversaryKind.RESIDUAL_ALIGNED, AdversaryKind.LEVERAGE_TARGETED) \
                and self.param <= 0.0:
            raise InstanceError('%s needs a positive scale' % self.kind.value)

    @classmethod
    def parse(cls, text):
        """Parse ``'none'``, ``'sign_flip_large'`` or ``'residual_aligned(2.5)'``."""
        if isinstance(text, Adversary):
            return text
        match = _ADVERSARY_PATTERN.match(str(text))
        if not match:
            raise InstanceError('cannot parse adversary %r' % text)
        try:
            kind = AdversaryKind(match.group(1))
        except ValueError:
            raise InstanceError('unknown adversary %r' % match.group(1))
        if match.group(2):
            return cls(kind, float(match.group(2)))
        return cls(kind)

    def __str__(self):
        if self.kind in PARAMETRISED:
            return '%s(%r)' % (self.kind.value, self.param)
        return self.kind.value


@dataclass(frozen=True)
class InstanceSpec(object):
    n: int
    d: int
    s: int
    o: int = 0
    sigma: float = 1.0
    covariance: CovarianceKind = CovarianceKind.IDENTITY
    correlation: float = 0.0
    explicit_matrix: Optional[Tuple[Tuple[float, ...], ...]] = None
    beta_magnitude: float = 1.0
    adversary: Adversary = field(default_factory=Adversary)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, 'covariance', CovarianceKind(self.covariance))
        object.__setattr__(self, 'adversary', Adversary.parse(self.adversary))
        for name in ('n', 'd', 's', 'o', 'seed'):
            object.__setattr__(self, name, int(getattr(self, name)))
        if self.n < 1 or self.d < 1:
            raise InstanceError('n and d must be positive, got n=%d d=%d' % (self.n, self.d))
        if not 0 <= self.s <= self.d:
            raise InstanceError('s must lie in [0, d], got %d' % self.s)
        if not 0 <= self.o < self.n:
            raise InstanceError('o must lie in [0, n), got %d' % self.o)
        if not self.sigma >= 0.0 or not math.isfinite(self.sigma):
            raise InstanceError('sigma must be finite and nonnegative, got %r' % self.sigma)
        if not abs(self.correlation) < 1.0:
            raise InstanceError('correlation must satisfy |r| < 1, got %r' % self.correlation)
        if self.covariance is CovarianceKind.EXPLICIT:
            if self.explicit_matrix is None:
                raise InstanceError('explicit covariance needs explicit_matrix')
            matrix = tuple(tuple(float(v) for v in row) for row in self.explicit_matrix)
            object.__setattr__(self, 'explicit_matrix', matrix)
            if np.shape(matrix) != (self.d, self.d):
                raise InstanceError('explicit_matrix must be %dx%d' % (self.d, self.d))
        self._check_adversary()

    def _check_adversary(self):
        kind = self.adversary.kind
        if self.o == 0 or kind is AdversaryKind.NONE:
            return
        clean_signal = self.sigma > 0.0 or (self.s > 0 and self.beta_magnitude != 0.0)
        if kind is AdversaryKind.SIGN_FLIP_LARGE and not clean_signal:
            raise InstanceError('sign_flip_large needs a nonzero clean output')
        if kind is AdversaryKind.RESIDUAL_ALIGNED and self.sigma == 0.0:
            raise InstanceError('residual_aligned needs sigma > 0')
        if kind is AdversaryKind.LEVERAGE_TARGETED and (self.s == 0 or self.beta_magnitude == 0.0):
            raise InstanceError('leverage_targeted needs a nonzero beta_star')

    def sigma_matrix(self):
        d, r = self.d, self.correlation
        if self.covariance is CovarianceKind.IDENTITY:
            return np.eye(d)
        if self.covariance is CovarianceKind.EQUICORRELATED:
            return np.full((d, d), r) + (1.0 - r) * np.eye(d)
        if self.covariance is CovarianceKind.TOEPLITZ:
            lags = np.abs(np.subtract.outer(np.arange(d), np.arange(d)))
            return np.power(r, lags)
        return np.array(self.explicit_matrix, dtype=float)

    def to_dict(self):
        return {
            'n': self.n, 'd': self.d, 's': self.s, 'o': self.o, 'sigma': self.sigma,
            'covariance': self.covariance.value, 'correlation': self.correlation,
            'explicit_matrix': [list(row) for row in self.explicit_matrix]
            if self.explicit_matrix is not None else None,
            'beta_magnitude': self.beta_magnitude, 'adversary': str(self.adversary),
            'seed': self.seed,
        }

    @classmethod
    def from_dict(cls, values):
        values = dict(values)
        if values.get('explicit_matrix') is not None:
            values['explicit_matrix'] = tuple(tuple(row) for row in values['explicit_matrix'])
        try:
            return cls(**values)
        except TypeError as exc:
            raise InstanceError('bad instance spec: %s' % exc)

    from_conf = from_dict


def sample_gaussian_matrix(n, sigma_matrix, rng):
    """``n`` rows i.i.d. N(0, sigma_matrix) as standard normals times a factor."""
    factor = covariance_factor(sigma_matrix)
    return rng.standard_normal((n, factor.shape[0])).dot(factor)


def adversary_theta(kind, X, xi, beta_star, o, rng):
    """Normalised contamination ``theta*`` chosen after seeing (X, xi, beta*).

    ``kind`` is an :class:`Adversary` or a string :meth:`Adversary.parse`
    accepts. ``residual_aligned`` moves the ``o`` largest-noise outputs by
    ``scale * sqrt(n) * max|y_clean|`` in the direction of their own noise.
    """
    adversary = Adversary.parse(kind)
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    if not 0 <= o < n:
        raise InstanceError('o must lie in [0, n), got %d' % o)
    theta = np.zeros(n)
    if adversary.kind is AdversaryKind.NONE or o == 0:
        return theta

    root_n = math.sqrt(n)
    y_clean = X.dot(beta_star) + xi
    if adversary.kind is AdversaryKind.OBLIVIOUS_CONSTANT:
        rows = rng.choice(n, size=o, replace=False)
        theta[rows] = adversary.param
    elif adversary.kind is AdversaryKind.SIGN_FLIP_LARGE:
        rows = rng.choice(n, size=o, replace=False)
        theta[rows] = -2.0 * y_clean[rows] / root_n
    elif adversary.kind is AdversaryKind.RESIDUAL_ALIGNED:
        rows = np.argsort(-np.abs(xi), kind='stable')[:o]
        maxval = np.max(np.abs(y_clean))
        theta[rows] = adversary.param * np.sign(xi[rows]) * maxval
    else:
        rows = np.argsort(-np.linalg.norm(X, axis=1), kind='stable')[:o]
        theta[rows] = -adversary.param * X[rows].dot(beta_star) / root_n
    return theta


def generate_instance(spec):
    rng = make_rng(spec.seed)
    sigma_matrix = spec.sigma_matrix()
    X = sample_gaussian_matrix(spec.n, sigma_matrix, rng)

    beta_star = np.zeros(spec.d)
    support = rng.choice(spec.d, size=spec.s, replace=False)
    signs = rng.choice(np.array([-1.0, 1.0]), size=spec.s)
    beta_star[support] = spec.beta_magnitude * signs

    xi = spec.sigma * rng.standard_normal(spec.n)
    theta_star = adversary_theta(spec.adversary, X, xi, beta_star, spec.o, rng)
    y_clean = X.dot(beta_star) + xi
    y = y_clean + math.sqrt(spec.n) * theta_star
    logger.debug('generated instance n=%d d=%d s=%d o=%d seed=%d', spec.n, spec.d, spec.s,
                 len(np.flatnonzero(theta_star)), spec.seed)
    return ProblemInstance(X=X, y=y, sigma_matrix=sigma_matrix, y_clean=y_clean,
                           beta_star=beta_star, theta_star=theta_star, xi=xi, sigma=spec.sigma)


def _write_matrix(path, matrix, prefix):
    with open(path, 'w', newline='') as csvfile:
        writer = csv.writer(csvfile, lineterminator='\n')
        writer.writerow(['%s%d' % (prefix, j) for j in range(matrix.shape[1])])
        writer.writerows([FLOAT_FORMAT % v for v in row] for row in matrix)


def _read_matrix(path):
    with open(path, newline='') as csvfile:
        rows = list(csv.reader(csvfile))
    return np.array([[float(v) for v in row] for row in rows[1:]], dtype=float).reshape(
        len(rows) - 1, len(rows[0]))


def save_instance(instance, directory, spec=None):
    """Write ``instance`` as CSV files plus ``metadata.json`` under ``directory``."""
    try:
        os.makedirs(directory, exist_ok=True)
        _write_matrix(os.path.join(directory, X_FILE), instance.X, 'x')
        _write_matrix(os.path.join(directory, SIGMA_FILE), instance.sigma_matrix, 's')

        y_clean = instance.y_clean
        with open(os.path.join(directory, Y_FILE), 'w', newline='') as csvfile:
            writer = csv.DictWriter(csvfile, fieldnames=Y_HEADER, lineterminator='\n')
            writer.writeheader()
            writer.writerows({'y': FLOAT_FORMAT % instance.y[i],
                              'y_clean': '' if y_clean is None else FLOAT_FORMAT % y_clean[i]}
                             for i in range(instance.n))

        if instance.has_truth:
            with open(os.path.join(directory, TRUTH_FILE), 'w', newline='') as csvfile:
                writer = csv.DictWriter(csvfile, fieldnames=TRUTH_HEADER, lineterminator='\n')
                writer.writeheader()
                for component in TRUTH_COMPONENTS:
                    values = getattr(instance, component)
                    writer.writerows({'component': component, 'index': i,
                                      'value': FLOAT_FORMAT % v} for i, v in enumerate(values))

        metadata = {'n': instance.n, 'd': instance.d, 'sigma': instance.sigma,
                    'seed': spec.seed if spec is not None else None,
                    'spec': spec.to_dict() if spec is not None else None}
        with open(os.path.join(directory, METADATA_FILE), 'w') as jsonfile:
            json.dump(metadata, jsonfile, indent=2, sort_keys=True)
            jsonfile.write('\n')
    except OSError as exc:
        raise OSError('could not write instance to %s: %s' % (directory, exc))
    logger.info('wrote instance n=%d d=%d to %s', instance.n, instance.d, directory)


def load_instance(directory):
    """Read a directory written by :func:`save_instance`.

    ``truth.csv``, ``sigma.csv`` and ``metadata.json`` are optional, so a
    bare ``X.csv`` / ``y.csv`` pair is accepted as an instance without truth.

    Returns:
        (ProblemInstance, InstanceSpec or None)
    """
    x_path = os.path.join(directory, X_FILE)
    y_path = os.path.join(directory, Y_FILE)
    for path in (x_path, y_path):
        if not os.path.isfile(path):
            logger.error('%s is not a file', path)
            raise InstanceError('%s is not a file' % path)

    X = _read_matrix(x_path)
    with open(y_path, newline='') as csvfile:
        rows = list(csv.DictReader(csvfile))
    y = np.array([float(row['y']) for row in rows])
    y_clean = None
    if rows and all(row.get('y_clean') for row in rows):
        y_clean = np.array([float(row['y_clean']) for row in rows])

    sigma_path = os.path.join(directory, SIGMA_FILE)
    sigma_matrix = _read_matrix(sigma_path) if os.path.isfile(sigma_path) else None

    metadata = {}
    metadata_path = os.path.join(directory, METADATA_FILE)
    if os.path.isfile(metadata_path):
        with open(metadata_path) as jsonfile:
            metadata = json.load(jsonfile)
    spec = InstanceSpec.from_dict(metadata['spec']) if metadata.get('spec') else None

    truth = {}
    truth_path = os.path.join(directory, TRUTH_FILE)
    if os.path.isfile(truth_path):
        n, d = X.shape
        truth = {'beta_star': np.zeros(d), 'theta_star': np.zeros(n), 'xi': np.zeros(n)}
        with open(truth_path, newline='') as csvfile:
            for row in csv.DictReader(csvfile):
                if row['component'] not in truth:
                    raise InstanceError('unknown truth component %r in %s'
                                        % (row['component'], truth_path))
                truth[row['component']][int(row['index'])] = float(row['value'])

    instance = ProblemInstance(X=X, y=y, sigma_matrix=sigma_matrix, y_clean=y_clean,
                               sigma=metadata.get('sigma'), **truth)
    return instance, spec
