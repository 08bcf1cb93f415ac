"""Memory stores and the geometric statistics the bounds are built from."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist

from .errors import DimensionMismatch, NonFinite, SingleMemory, ValidationError


def _frozen(a):
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


class MemoryStore:
    """Stored patterns as the columns of a ``d x M`` matrix.

    ``contamination`` holds per-pattern noise ``delta xi``; retrieval scores
    are taken against ``keys = memories + contamination`` while outputs are
    built from the clean ``memories``. Without contamination the two
    coincide (auto-associative mode).

    Instances are immutable; arrays are exposed read-only.
    """

    def __init__(self, memories, contamination=None):
        memories = _frozen(memories)
        if memories.ndim != 2:
            raise DimensionMismatch(f"memories must be a d x M matrix, got shape {memories.shape}")
        d, M = memories.shape
        if d < 1 or M < 1:
            raise ValidationError(f"need d >= 1 and M >= 1, got d={d}, M={M}")
        if not np.all(np.isfinite(memories)):
            raise NonFinite("memories contain non-finite values")
        if contamination is not None:
            contamination = _frozen(contamination)
            if contamination.shape != memories.shape:
                raise DimensionMismatch(
                    f"contamination shape {contamination.shape} != memories shape {memories.shape}"
                )
            if not np.all(np.isfinite(contamination)):
                raise NonFinite("contamination contains non-finite values")
            keys = _frozen(memories + contamination)
        else:
            keys = memories
        self._memories = memories
        self._contamination = contamination
        self._keys = keys
        # derived per-store summaries (e.g. linear-kernel sums) computed lazily
        self._memo = {}

    @classmethod
    def from_rows(cls, rows, contamination_rows=None):
        """Build from one-pattern-per-row data (the file layout)."""
        rows = np.asarray(rows, dtype=np.float64)
        if rows.ndim == 1:
            rows = rows[None, :]
        cont = None
        if contamination_rows is not None:
            cont = np.atleast_2d(np.asarray(contamination_rows, dtype=np.float64)).T
        return cls(rows.T, cont)

    @property
    def memories(self):
        return self._memories

    @property
    def contamination(self):
        """Contamination matrix; all zeros when none was supplied."""
        if self._contamination is None:
            return np.zeros_like(self._memories)
        return self._contamination

    @property
    def has_contamination(self):
        return self._contamination is not None

    @property
    def keys(self):
        return self._keys

    @property
    def dim(self):
        return self._memories.shape[0]

    @property
    def count(self):
        return self._memories.shape[1]

    def scaled(self, c):
        """Copy with memories and contamination multiplied by ``c``."""
        cont = None if self._contamination is None else c * self._contamination
        return MemoryStore(c * self._memories, cont)

    def check_query(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.dim,):
            raise DimensionMismatch(f"query has shape {x.shape}, expected ({self.dim},)")
        if not np.all(np.isfinite(x)):
            raise NonFinite("query contains non-finite values")
        return x

    def __repr__(self):
        return f"MemoryStore(d={self.dim}, M={self.count}, contaminated={self.has_contamination})"


def _scope(store, indices):
    if indices is None:
        return np.arange(store.count)
    idx = np.asarray(indices, dtype=np.int64)
    if idx.ndim != 1 or idx.size == 0 or idx.min() < 0 or idx.max() >= store.count:
        raise ValidationError(f"invalid index scope {indices!r} for M={store.count}")
    return idx


def max_norm(store):
    """Largest memory norm ``m``."""
    return float(np.linalg.norm(store.memories, axis=0).max())


def radius(store, indices=None):
    """Half the smallest pairwise distance among the memories in scope."""
    idx = _scope(store, indices)
    if idx.size < 2:
        raise SingleMemory("radius needs at least two memories in scope")
    X = store.memories[:, idx]
    # rescale so squared distances neither underflow nor overflow
    scale = float(np.max(np.abs(X)))
    if scale == 0.0:
        return 0.0
    return 0.5 * scale * float(pdist((X / scale).T).min())


def _overlaps(X, x):
    # elementwise product + column sums: no BLAS, so the result depends only
    # on the values of x, never on its memory layout
    x = np.ascontiguousarray(x, dtype=np.float64)
    return (X * x[:, None]).sum(axis=0)


def _separation(X, pos, x):
    p = _overlaps(X, x)
    others = np.delete(p, pos)
    return float(p[pos] - others.max())


def separations(store, indices=None):
    """Separation of every memory in scope, relative to the others in scope.

    Entry ``i`` is ``min_{nu != mu} <xi_mu, xi_mu> - <xi_mu, xi_nu>`` for
    ``mu = scope[i]``.
    """
    idx = _scope(store, indices)
    if idx.size < 2:
        raise SingleMemory("separation needs at least two memories in scope")
    X = np.ascontiguousarray(store.memories[:, idx])
    return np.array([_separation(X, i, X[:, i]) for i in range(idx.size)])


def separation_at(store, mu, x, indices=None):
    """Separation of memory ``mu`` measured at query ``x``.

    ``min_{nu != mu} <x, xi_mu> - <x, xi_nu>``; at ``x = xi_mu`` this equals
    the plain separation of ``mu`` bit for bit.
    """
    idx = _scope(store, indices)
    hits = np.flatnonzero(idx == mu)
    if hits.size == 0:
        raise ValidationError(f"memory {mu} is not in the index scope")
    if idx.size < 2:
        raise SingleMemory("separation needs at least two memories in scope")
    x = store.check_query(x)
    X = np.ascontiguousarray(store.memories[:, idx])
    return _separation(X, int(hits[0]), x)


@dataclass(frozen=True)
class GeometryStats:
    m: float
    R: float
    delta: np.ndarray
    store: MemoryStore

    def delta_tilde(self, mu, x):
        return separation_at(self.store, mu, x)


def geometry_stats(store):
    """m, R and per-memory separations over the clean memories."""
    if store.count < 2:
        raise SingleMemory("geometry needs M >= 2; use max_norm() for m alone")
    return GeometryStats(
        m=max_norm(store), R=radius(store), delta=separations(store), store=store
    )


def in_sphere(store, x, mu, R=None):
    """Whether ``x`` lies in the closed ball of radius R around memory ``mu``."""
    if not 0 <= mu < store.count:
        raise ValidationError(f"memory index {mu} out of range for M={store.count}")
    if R is None:
        R = radius(store)
    x = store.check_query(x)
    return bool(np.linalg.norm(x - store.memories[:, mu]) <= R)


def geometry_stats_m(store):
    """``m`` alone, defined even for a single memory."""
    return max_norm(store)
