"""Synthetic memories and query corruptions."""

import math

import numpy as np

from ..errors import ValidationError
from ..patterns import MemoryStore


def gen_sphere_patterns(d, M, radius, seed):
    """``M`` i.i.d. uniform points on the radius-``radius`` sphere in ``R^d``."""
    if d < 1 or M < 1:
        raise ValidationError(f"need d >= 1 and M >= 1, got d={d}, M={M}")
    if not radius > 0:
        raise ValidationError(f"radius must be positive, got {radius}")
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((d, M))
    norms = np.linalg.norm(X, axis=0)
    # a zero draw has probability zero, but redraw rather than divide by it
    while np.any(norms == 0):
        bad = norms == 0
        X[:, bad] = rng.standard_normal((d, int(bad.sum())))
        norms = np.linalg.norm(X, axis=0)
    return MemoryStore(X * (radius / norms))


def half_mask_query(xi):
    """Keep the first ``ceil(d/2)`` coordinates and zero the rest.

    A one-dimensional pattern cannot be half-masked and is returned as is.
    """
    xi = np.asarray(xi, dtype=np.float64)
    out = xi.copy()
    out[math.ceil(xi.size / 2):] = 0.0
    return out


def noisy_query(xi, variance, seed):
    """``xi + eps`` with ``eps ~ N(0, variance * I)``."""
    if variance < 0:
        raise ValidationError(f"noise variance must be nonnegative, got {variance}")
    xi = np.asarray(xi, dtype=np.float64)
    if variance == 0:
        return xi.copy()
    rng = np.random.default_rng(seed)
    return xi + math.sqrt(variance) * rng.standard_normal(xi.shape)
