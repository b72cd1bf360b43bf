"""Seed derivation and generator construction.

Every random stream in the package is a ``numpy.random.Generator`` over the
counter-based Philox bit generator, keyed by a 64-bit seed. Child seeds are
derived from ``(master_seed, index)`` with the splitmix64 finaliser, so a
stream depends only on its own index and never on scheduling order.
"""
import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15


def splitmix64(x):
    z = x & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(master_seed, index):
    """Seed of the ``index``-th child stream of ``master_seed``."""
    if index < 0:
        raise ValueError('index must be nonnegative, got %d' % index)
    return splitmix64(int(master_seed) + (int(index) + 1) * GOLDEN_GAMMA)


def make_rng(seed):
    return np.random.Generator(np.random.Philox(key=int(seed) & MASK64))


def spawn_seed(rng):
    """Draw a fresh 64-bit master seed from an existing generator."""
    return int(rng.integers(0, 1 << 63))
