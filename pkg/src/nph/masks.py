"""Support-set builders for the sparse-structured dynamics.

Indices are 0-based throughout: a mask over ``M`` memories is a strictly
increasing subset of ``range(M)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidMask, KOutOfRange, PositionOutOfRange, ShapeMismatch, ValidationError
from .rng import Xoshiro256


@dataclass(frozen=True)
class SupportMask:
    indices: tuple
    count: int
    origin: str = "full"
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        object.__setattr__(self, "indices", idx)
        if not idx:
            raise InvalidMask("mask is empty")
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise InvalidMask(f"mask indices must be strictly increasing: {idx}")
        if idx[0] < 0 or idx[-1] >= self.count:
            raise InvalidMask(f"mask indices out of range for M={self.count}: {idx}")
        if self.origin == "full" and len(idx) != self.count:
            raise InvalidMask("a full mask must cover every memory")

    @property
    def k(self):
        return len(self.indices)

    @property
    def array(self):
        return np.array(self.indices, dtype=np.int64)

    def __contains__(self, mu):
        return mu in set(self.indices)

    def __len__(self):
        return len(self.indices)

    def validate_for(self, store):
        if self.count != store.count:
            raise InvalidMask(f"mask built for M={self.count}, store has M={store.count}")


def mask_full(M):
    return SupportMask(tuple(range(M)), M, "full")


def mask_random(M, k, seed):
    """Uniform ``k``-subset: the first ``k`` slots of a seeded Fisher-Yates shuffle."""
    if not 1 <= k <= M:
        raise KOutOfRange(f"k={k} outside [1, {M}]")
    perm = list(range(M))
    rng = Xoshiro256(seed)
    for i in range(k):
        j = i + rng.below(M - i)
        perm[i], perm[j] = perm[j], perm[i]
    return SupportMask(tuple(sorted(perm[:k])), M, "random", {"k": k, "seed": seed})


def default_window(L):
    return max(1, round(math.sqrt(L)))


def mask_window(L, M, q, w=None):
    """Window of width ``w`` around query position ``q``, truncated at the edges.

    Covers ``q - w//2 .. q + ceil(w/2) - 1`` intersected with ``range(M)``.
    """
    if M != L:
        raise ShapeMismatch(f"window masks need M == L, got M={M}, L={L}")
    if not 0 <= q < L:
        raise PositionOutOfRange(f"query position {q} outside [0, {L})")
    if w is None:
        w = default_window(L)
    if not 1 <= w <= M:
        raise ValidationError(f"window width {w} outside [1, {M}]")
    lo = max(0, q - w // 2)
    hi = min(M - 1, q + (w + 1) // 2 - 1)
    return SupportMask(tuple(range(lo, hi + 1)), M, "window", {"w": w, "q": q})


def topk_indices(scores, K):
    """Indices of the ``K`` largest scores, ties going to the lower index."""
    scores = np.asarray(scores, dtype=np.float64)
    M = scores.size
    if not 1 <= K <= M:
        raise KOutOfRange(f"K={K} outside [1, {M}]")
    order = np.lexsort((np.arange(M), -scores))
    return tuple(sorted(int(i) for i in order[:K]))


def mask_topk(store, x, K):
    """The ``K`` memories with the largest overlap ``<x, xi_mu>``."""
    x = store.check_query(x)
    p = store.memories.T @ x
    return SupportMask(topk_indices(p, K), store.count, "topk", {"k": K})


def parse_mask_spec(text):
    """Parse ``full | random:k=<k>,seed=<s> | window:w=<w> | topk:k=<K>``.

    ``random`` also accepts ``frac=<f>`` in place of ``k`` (k = max(1, round(f*M)))
    and ``window`` may omit ``w``. Returns ``(kind, params)``.
    """
    kind, _, rest = text.strip().partition(":")
    kind = kind.lower()
    params = {}
    if rest:
        for item in rest.split(","):
            key, eq, value = item.partition("=")
            if not eq:
                raise ValidationError(f"bad mask parameter {item!r} in {text!r}")
            key = key.strip()
            params[key] = float(value) if key == "frac" else int(value)
    allowed = {
        "full": set(),
        "random": {"k", "seed", "frac"},
        "window": {"w"},
        "topk": {"k"},
    }
    if kind not in allowed:
        raise ValidationError(f"unknown mask kind {kind!r}")
    unknown = set(params) - allowed[kind]
    if unknown:
        raise ValidationError(f"unknown parameters {sorted(unknown)} for mask {kind!r}")
    if kind == "random" and ("k" in params) == ("frac" in params):
        raise ValidationError("random mask needs exactly one of k or frac")
    if kind == "topk" and "k" not in params:
        raise ValidationError("topk mask needs k")
    return kind, params


def build_mask(kind, params, store, x, position, seed=0):
    """Instantiate a parsed mask spec for one query.

    ``position`` is the query's index in a self-aligned sequence (window
    masks); ``seed`` is mixed into the random-mask seed so that each query
    gets its own draw.
    """
    M = store.count
    if kind == "full":
        return mask_full(M)
    if kind == "random":
        k = params["k"] if "k" in params else max(1, round(params["frac"] * M))
        return mask_random(M, min(k, M), (params.get("seed", 0) ^ seed) & ((1 << 64) - 1))
    if kind == "window":
        return mask_window(M, M, position, params.get("w"))
    if kind == "topk":
        return mask_topk(store, x, min(params["k"], M))
    raise ValidationError(f"unknown mask kind {kind!r}")
