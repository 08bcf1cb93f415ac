"""Forward pass of the nonparametric Hopfield layer.

``NPH(R, Y) = T(beta R W_Q W_K^T Y^T) Y W_K W_V`` where ``T`` turns each row
of the score matrix into retrieval weights (softmax, masked softmax or a
kernel ratio). Patterns are rows here, matching the attention convention.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import Dense, DynamicsConfig, Linear, MultiHead, Prf, Sparse
from .errors import InvalidMask, ShapeMismatch, ValidationError
from .kernels import elu_feature, softmax
from .masks import SupportMask, mask_window, topk_indices


@dataclass
class LayerWeights:
    W_Q: np.ndarray | None = None
    W_K: np.ndarray | None = None
    W_V: np.ndarray | None = None

    @staticmethod
    def _resolve(w, n):
        if w is None:
            return np.eye(n)
        w = np.asarray(w, dtype=np.float64)
        if w.ndim != 2:
            raise ShapeMismatch(f"weight must be a matrix, got shape {w.shape}")
        if not np.all(np.isfinite(w)):
            raise ValidationError("weights contain non-finite values")
        return w


@dataclass(frozen=True)
class MemoryRetrieval:
    pass


@dataclass(frozen=True)
class NPH:
    pass


@dataclass(frozen=True)
class NPHPooling:
    prototypes: np.ndarray


@dataclass(frozen=True)
class NPHLayer:
    pass


def window_row_masks(L, M, w=None):
    """One sliding-window mask per query row; needs as many memories as queries."""
    if M != L:
        raise InvalidMask(f"window masks need M == L, got M={M}, L={L}")
    return [mask_window(L, M, q, w) for q in range(L)]


def topk_row_masks(scores, K):
    M = scores.shape[1]
    return [SupportMask(topk_indices(row, K), M, "topk", {"k": K}) for row in scores]


def _row_weights(Q, K, beta, variant, row_masks):
    S = beta * (Q @ K.T)
    L, M = S.shape
    if isinstance(variant, Dense):
        return np.vstack([softmax(1.0, row) for row in S])
    if isinstance(variant, Sparse):
        masks = row_masks if row_masks is not None else [variant.mask] * L
        if len(masks) != L:
            raise InvalidMask(f"{len(masks)} row masks for {L} query rows")
        A = np.zeros_like(S)
        for i, (row, mask) in enumerate(zip(S, masks)):
            if mask.count != M:
                raise InvalidMask(f"row {i}: mask built for M={mask.count}, layer has M={M}")
            w = softmax(1.0, row)
            idx = mask.array
            wm = w[idx] / w[idx].sum() if variant.renormalize else w[idx]
            A[i, idx] = wm
        return A
    s = np.sqrt(beta)
    if isinstance(variant, Linear):
        fq = elu_feature(variant.feature_scale * s * Q)
        fk = elu_feature(variant.feature_scale * s * K)
        A = fq @ fk.T
        return A / A.sum(axis=1, keepdims=True)
    if isinstance(variant, Prf):
        cfg = variant.config
        lq = cfg.log_features((variant.feature_scale * s * Q).T)
        lk = cfg.log_features((variant.feature_scale * s * K).T)
        fq = np.exp(lq - lq.max(axis=0, keepdims=True))
        fk = np.exp(lk - lk.max())
        A = fq.T @ fk
        return A / A.sum(axis=1, keepdims=True)
    if isinstance(variant, MultiHead):
        raise ValidationError("multi-head dynamics are not a row activation; stack layers instead")
    raise ValidationError(f"unknown dynamics variant {variant!r}")


def nph_forward(R, Y=None, weights=None, mode=None, dyn=None, row_masks=None, steps=1):
    """Apply the layer to query rows ``R`` (``L x d_raw``) and memory rows ``Y``.

    ``mode`` picks the configuration: ``MemoryRetrieval`` (all weights
    identity), ``NPH`` (supplied ``W_Q, W_K, W_V``), ``NPHPooling`` (static
    prototype rows replace ``R W_Q``) or ``NPHLayer`` (``Y`` and ``W_Q`` are
    identities, so the rows of ``W_K`` are the stored keys). Kernel variants
    see ``sqrt(beta)``-scaled queries and keys. ``steps > 1`` repeats the
    Hopfield update in the associative space before projecting with
    ``W_V``.
    """
    mode = mode or NPH()
    dyn = dyn or DynamicsConfig()
    weights = weights or LayerWeights()
    R = None if R is None else np.atleast_2d(np.asarray(R, dtype=np.float64))

    if isinstance(mode, MemoryRetrieval):
        if Y is None:
            raise ShapeMismatch("memory retrieval needs memory rows Y")
        Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
        Q, K = R, Y
        W_V = np.eye(Y.shape[1])
    elif isinstance(mode, NPH):
        if Y is None:
            raise ShapeMismatch("NPH needs memory rows Y")
        Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
        W_Q = weights._resolve(weights.W_Q, R.shape[1])
        W_K = weights._resolve(weights.W_K, Y.shape[1])
        _agree(R, W_Q, "R", "W_Q")
        _agree(Y, W_K, "Y", "W_K")
        Q, K = R @ W_Q, Y @ W_K
        W_V = weights._resolve(weights.W_V, K.shape[1])
    elif isinstance(mode, NPHPooling):
        if Y is None:
            raise ShapeMismatch("NPHPooling needs memory rows Y")
        Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
        W_K = weights._resolve(weights.W_K, Y.shape[1])
        _agree(Y, W_K, "Y", "W_K")
        K = Y @ W_K
        Q = np.atleast_2d(np.asarray(mode.prototypes, dtype=np.float64))
        W_V = weights._resolve(weights.W_V, K.shape[1])
    elif isinstance(mode, NPHLayer):
        if weights.W_K is None:
            raise ShapeMismatch("NPHLayer needs stored keys W_K")
        K = weights._resolve(weights.W_K, 0)
        Q = R
        W_V = weights._resolve(weights.W_V, K.shape[1])
    else:
        raise ValidationError(f"unknown layer mode {mode!r}")

    if Q.shape[1] != K.shape[1]:
        raise ShapeMismatch(f"query width {Q.shape[1]} != key width {K.shape[1]}")
    _agree(K, W_V, "keys", "W_V")
    if steps < 1:
        raise ValidationError("steps must be >= 1")
    beta = dyn.beta_for(K.shape[1])
    for _ in range(steps):
        A = _row_weights(Q, K, beta, dyn.variant, row_masks)
        Q = A @ K
    return Q @ W_V


def _agree(left, right, lname, rname):
    if left.shape[1] != right.shape[0]:
        raise ShapeMismatch(f"{lname} has {left.shape[1]} columns but {rname} has {right.shape[0]} rows")
