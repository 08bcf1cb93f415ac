"""Kernel machinery behind the retrieval dynamics.

Log-sum-exp and softmax, the truncated exponential power series (the
"infinite polynomial" kernel used to check softmax weights), the
multinomial feature expansion of ``<x, y>^n / n!``, the ELU+1 feature map of
the linear model and positive random features for the softmax kernel.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from .errors import DimensionMismatch, EmptyVector, EnumerationTooLarge, NonFinite, ValidationError
from .rng import Xoshiro256


def default_beta(d):
    """Inverse temperature ``1 / sqrt(d)``."""
    return 1.0 / math.sqrt(d)


def check_beta(beta):
    beta = float(beta)
    if not math.isfinite(beta) or beta <= 0:
        raise ValidationError(f"beta must be positive and finite, got {beta}")
    return beta


def _vector(z):
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 1:
        raise DimensionMismatch(f"expected a vector, got shape {z.shape}")
    if z.size == 0:
        raise EmptyVector("vector is empty")
    if not np.all(np.isfinite(z)):
        raise NonFinite("vector contains non-finite values")
    return z


def lse(beta, z):
    """``log(sum(exp(beta * z))) / beta``, shifted by the max."""
    beta = check_beta(beta)
    z = _vector(z)
    top = z.max()
    return float(top + np.log(np.sum(np.exp(beta * (z - top)))) / beta)


def softmax(beta, z):
    beta = check_beta(beta)
    z = _vector(z)
    e = np.exp(beta * (z - z.max()))
    return e / e.sum()


def poly_kernel_truncated(x, y, order):
    """``sum_{n=0}^{order} <x, y>^n / n!``.

    Evaluated in nested (Horner) form so that for large orders the result is
    as close to ``exp(<x, y>)`` as double precision allows.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise DimensionMismatch(f"shapes differ: {x.shape} vs {y.shape}")
    if order < 0:
        raise ValidationError("truncation order must be nonnegative")
    return _exp_series(float(x @ y), order)


def _exp_series(t, order):
    acc = 1.0
    for n in range(order, 0, -1):
        acc = 1.0 + t * acc / n
    return acc


def poly_tail_bound(t, order):
    """Upper bound on ``|exp(t) - series(t, order)|``."""
    t = abs(t)
    return t ** (order + 1) * math.exp(t) / math.factorial(order + 1)


def truncated_softmax_weights(beta, x, memories, order):
    """Retrieval weights with ``exp`` replaced by its order-``order`` series.

    Weight ``mu`` is ``K(sqrt(beta) x, sqrt(beta) xi_mu)`` normalized over all
    memories, where ``K`` is :func:`poly_kernel_truncated`. As the order grows
    this converges to ``softmax(beta * memories.T @ x)``.
    """
    beta = check_beta(beta)
    X = np.asarray(memories, dtype=np.float64)
    s = math.sqrt(beta)
    k = np.array([poly_kernel_truncated(s * x, s * X[:, mu], order) for mu in range(X.shape[1])])
    return k / k.sum()


def _compositions(n, parts):
    """All tuples of ``parts`` nonnegative ints summing to ``n``."""
    for cuts in itertools.combinations(range(n + parts - 1), parts - 1):
        prev = -1
        out = []
        for c in cuts:
            out.append(c - prev - 1)
            prev = c
        out.append(n + parts - 1 - prev - 1)
        yield tuple(out)


def multinomial_expansion_check(x, y, n):
    """Both sides of ``<x, y>^n / n! = sum_l phi_l(x) phi_l(y)``.

    The right side sums over every composition ``l`` of ``n`` into
    ``len(x)`` parts with ``phi_l(v) = prod_i v_i^{l_i} / sqrt(l_i!)``.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise DimensionMismatch(f"shapes differ: {x.shape} vs {y.shape}")
    d = x.size
    if n < 0:
        raise ValidationError("n must be nonnegative")
    if d > 6 or n > 8:
        raise EnumerationTooLarge(f"enumeration limited to d <= 6 and n <= 8 (got d={d}, n={n})")
    lhs = float(x @ y) ** n / math.factorial(n)
    rhs = 0.0
    for ell in _compositions(n, d):
        norm = math.sqrt(math.prod(math.factorial(l) for l in ell))
        fx = math.prod(float(xi) ** l for xi, l in zip(x, ell)) / norm
        fy = math.prod(float(yi) ** l for yi, l in zip(y, ell)) / norm
        rhs += fx * fy
    return lhs, rhs


def elu_feature(x):
    """``elu(x) + 1`` componentwise; strictly positive."""
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise NonFinite("input contains non-finite values")
    return np.where(x >= 0, x + 1.0, np.exp(np.minimum(x, 0.0)))


class PrfConfig:
    """Positive random features for the softmax kernel.

    ``features`` Gaussian projections of dimension ``dim`` are drawn once
    from :class:`~nph.rng.Xoshiro256` seeded with ``seed`` (row by row,
    projection ``j`` occupying draws ``j*dim .. j*dim+dim-1``) and cached.
    ``Phi(x)_j = exp(<p_j, x> - |x|^2 / 2) / sqrt(features)`` so that
    ``E <Phi(x), Phi(y)> = exp(<x, y>)``.
    """

    def __init__(self, features, seed, dim):
        if features < 1:
            raise ValidationError("feature count must be >= 1")
        if dim < 1:
            raise ValidationError("dimension must be >= 1")
        self.features = int(features)
        self.seed = int(seed)
        self.dim = int(dim)
        proj = Xoshiro256(self.seed).normals(self.features * self.dim).reshape(self.features, self.dim)
        proj.setflags(write=False)
        self._projections = proj

    @classmethod
    def from_projections(cls, projections):
        """Config with explicitly supplied projections (tests, replays)."""
        p = np.array(projections, dtype=np.float64)
        if p.ndim != 2:
            raise DimensionMismatch("projections must be a features x dim matrix")
        cfg = cls.__new__(cls)
        cfg.features, cfg.dim = p.shape
        cfg.seed = None
        p.setflags(write=False)
        cfg._projections = p
        return cfg

    @property
    def projections(self):
        return self._projections

    def log_features(self, X):
        """Logs of the feature values for the columns of ``X`` (``features x n``)."""
        X = np.asarray(X, dtype=np.float64)
        if X.shape[0] != self.dim:
            raise DimensionMismatch(f"input dimension {X.shape[0]} != projection dimension {self.dim}")
        return self._projections @ X - 0.5 * np.sum(X * X, axis=0) - 0.5 * math.log(self.features)

    def __repr__(self):
        return f"PrfConfig(features={self.features}, seed={self.seed}, dim={self.dim})"


def prf_features(x, cfg):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionMismatch("expected a vector")
    return np.exp(cfg.log_features(x[:, None])[:, 0])
