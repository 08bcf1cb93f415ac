"""Retrieval dynamics and the fixed-point driver.

Every step maps a query ``x`` to a weighted combination of the clean memory
columns, with weights scored against the (possibly contaminated) keys:

* dense: softmax of ``beta * keys.T @ x`` over all memories
* sparse: the same softmax weights, summed over the mask only
* linear: normalized ``<elu1(x), elu1(key_mu)>``
* prf: normalized positive-random-feature inner products
* multihead: sum of per-head dense retrievals mapped through ``W_O``

The kernelized variants carry no inverse temperature; use ``feature_scale``
(``sqrt(beta)``) to fold one in.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidMask, NonFinite, ShapeMismatch, ValidationError
from .kernels import PrfConfig, check_beta, default_beta, elu_feature, lse, softmax
from .masks import SupportMask


@dataclass(frozen=True)
class Dense:
    pass


@dataclass(frozen=True)
class Sparse:
    mask: SupportMask
    # extension: rescale masked weights to sum to one
    renormalize: bool = False


@dataclass(frozen=True)
class Linear:
    feature_scale: float = 1.0


@dataclass(frozen=True)
class Prf:
    config: PrfConfig
    feature_scale: float = 1.0


@dataclass(frozen=True)
class MultiHead:
    stores: tuple
    w_out: tuple = ()

    def __post_init__(self):
        stores = tuple(self.stores)
        if not stores:
            raise ValidationError("multi-head dynamics needs at least one head")
        d = stores[0].dim
        if any(s.dim != d for s in stores):
            raise ShapeMismatch("all heads must share the pattern dimension")
        w_out = tuple(self.w_out) or tuple(np.eye(d) for _ in stores)
        if len(w_out) != len(stores):
            raise ShapeMismatch(f"{len(stores)} heads but {len(w_out)} output matrices")
        w_out = tuple(np.asarray(w, dtype=np.float64) for w in w_out)
        for w in w_out:
            if w.shape != (d, d):
                raise ShapeMismatch(f"output matrix has shape {w.shape}, expected ({d}, {d})")
        object.__setattr__(self, "stores", stores)
        object.__setattr__(self, "w_out", w_out)


@dataclass(frozen=True)
class DynamicsConfig:
    variant: object = field(default_factory=Dense)
    beta: float | None = None
    tol: float = 1e-8
    max_iters: int = 100

    def __post_init__(self):
        if not self.tol > 0:
            raise ValidationError(f"tol must be positive, got {self.tol}")
        if self.max_iters < 1:
            raise ValidationError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.beta is not None:
            check_beta(self.beta)

    def beta_for(self, d):
        return default_beta(d) if self.beta is None else float(self.beta)


@dataclass
class RetrievalOutcome:
    retrieved: np.ndarray
    steps: int
    converged: bool
    trajectory: list | None = None
    energy_trace: list | None = None


def _scores_weights(store, x, beta):
    x = store.check_query(x)
    return softmax(beta, store.keys.T @ x)


def step_dense(store, x, beta):
    """``memories @ softmax(beta * keys.T @ x)``."""
    return store.memories @ _scores_weights(store, x, beta)


def step_sparse(store, x, beta, mask, renormalize=False):
    """Dense softmax weights, summed over the mask only (not renormalized)."""
    if not isinstance(mask, SupportMask):
        raise InvalidMask("mask must be a SupportMask")
    mask.validate_for(store)
    w = _scores_weights(store, x, beta)
    idx = mask.array
    wm = w[idx]
    if renormalize:
        wm = wm / wm.sum()
    return store.memories[:, idx] @ wm


def _linear_summary(store, s):
    memo = store._memo
    key = ("linear", s)
    if key not in memo:
        phi = elu_feature(s * store.keys)  # d x M
        memo[key] = (phi @ store.memories.T, phi.sum(axis=1))
    return memo[key]


def linear_weights(store, x, feature_scale=1.0):
    x = store.check_query(x)
    w = elu_feature(feature_scale * store.keys).T @ elu_feature(feature_scale * x)
    return w / w.sum()


def step_linear(store, x, feature_scale=1.0):
    """Kernel-ratio step with the ``elu + 1`` feature map.

    Uses the per-store sums ``sum_mu phi(key_mu) xi_mu^T`` and
    ``sum_mu phi(key_mu)``, computed once and reused for every query.
    """
    x = store.check_query(x)
    num, den = _linear_summary(store, float(feature_scale))
    f = elu_feature(feature_scale * x)
    return (f @ num) / (f @ den)


def prf_weights(store, x, cfg, feature_scale=1.0):
    """Normalized PRF weights, computed in the log domain for stability."""
    x = store.check_query(x)
    if cfg.dim != store.dim:
        raise ShapeMismatch(f"PRF projections have dimension {cfg.dim}, store has {store.dim}")
    lq = cfg.log_features(feature_scale * x[:, None])[:, 0]
    lk = cfg.log_features(feature_scale * store.keys)
    # shifts cancel in the ratio; they only keep exp() in range
    fq = np.exp(lq - lq.max())
    fk = np.exp(lk - lk.max())
    w = fk.T @ fq
    return w / w.sum()


def step_prf(store, x, cfg, feature_scale=1.0):
    return store.memories @ prf_weights(store, x, cfg, feature_scale)


def step_multihead(stores, w_out, x, beta):
    """``sum_s W_O^s (Xi_s softmax(beta Xi_{delta,s}^T x))``."""
    heads = MultiHead(tuple(stores), tuple(w_out))
    out = np.zeros(heads.stores[0].dim)
    for store, w in zip(heads.stores, heads.w_out):
        out += w @ step_dense(store, x, beta)
    return out


def energy(store, x, beta):
    """``-lse(beta, memories.T @ x) + <x, x> / 2``."""
    x = store.check_query(x)
    return -lse(beta, store.memories.T @ x) + 0.5 * float(x @ x)


def step(store, x, config):
    """One update under ``config``."""
    v = config.variant
    beta = config.beta_for(store.dim)
    if isinstance(v, Dense):
        return step_dense(store, x, beta)
    if isinstance(v, Sparse):
        return step_sparse(store, x, beta, v.mask, v.renormalize)
    if isinstance(v, Linear):
        return step_linear(store, x, v.feature_scale)
    if isinstance(v, Prf):
        return step_prf(store, x, v.config, v.feature_scale)
    if isinstance(v, MultiHead):
        return step_multihead(v.stores, v.w_out, x, beta)
    raise ValidationError(f"unknown dynamics variant {v!r}")


def retrieve(store, x0, config=None, record=False):
    """Iterate the configured step from ``x0``.

    Stops once ``|x_{t+1} - x_t| <= tol`` or after ``max_iters`` updates.
    With ``record`` the iterates (``x0`` first) are kept, plus the energy of
    each iterate for the dense variant.
    """
    config = config or DynamicsConfig()
    x = store.check_query(x0).copy()
    beta = config.beta_for(store.dim)
    dense = isinstance(config.variant, Dense)
    trajectory = [x.copy()] if record else None
    energies = [energy(store, x, beta)] if record and dense else None
    converged = False
    steps = 0
    while steps < config.max_iters:
        nxt = step(store, x, config)
        steps += 1
        if not np.all(np.isfinite(nxt)):
            raise NonFinite(f"iterate {steps} is not finite")
        moved = float(np.linalg.norm(nxt - x))
        x = nxt
        if record:
            trajectory.append(x.copy())
            if dense:
                energies.append(energy(store, x, beta))
        if moved <= config.tol:
            converged = True
            break
    return RetrievalOutcome(x, steps, converged, trajectory, energies)


def feature_scale_for(beta):
    """Scale that folds an inverse temperature into kernelized variants."""
    return math.sqrt(check_beta(beta))
