"""Closed-form guarantees for sparse-structured retrieval.

* :func:`retrieval_error_bound` - error of one sparse step from a query near
  a stored pattern, as a function of the support size ``k``
* :func:`well_separation` - separation threshold under which the ball
  around a memory is mapped into itself
* :func:`capacity_lower_bound` - Lambert-W lower bound on how many random
  sphere patterns can be stored
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from .dynamics import step_sparse
from .errors import DegenerateRadius, HypothesisViolated, OutOfDomain, SingleMemory, ValidationError
from .kernels import check_beta
from .masks import mask_full
from .patterns import in_sphere, max_norm, radius, separation_at, separations

_INV_E = math.exp(-1.0)
# above this exponent exp() overflows a double
_EXP_CEILING = 700.0


def lambert_w0(x):
    """Principal branch of the Lambert W function (``w e^w = x``, ``w >= -1``).

    Halley iteration from a piecewise start: the branch-point series in
    ``sqrt(2(ex + 1))`` near ``-1/e``, the Maclaurin series near zero,
    ``log(1 + x)`` on the middle range and ``L1 - L2 + L2/L1`` above ``e``.
    """
    x = float(x)
    if math.isnan(x) or math.isinf(x):
        raise OutOfDomain(f"W0 is undefined for {x}")
    if x < -_INV_E:
        # allow for the rounding of -1/e itself
        if x < -_INV_E - 4e-17:
            raise OutOfDomain(f"W0 needs x >= -1/e, got {x}")
        return -1.0
    if x == 0.0:
        return 0.0
    if x < -0.3:
        p = math.sqrt(max(0.0, 2.0 * (math.e * x + 1.0)))
        w = -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p ** 3
        if p < 1e-5:
            # iteration cannot improve on the series this close to the branch point
            return w
    elif abs(x) <= 0.3:
        w = x - x * x + 1.5 * x ** 3
    elif x <= math.e:
        w = math.log1p(x) * (1.0 - math.log1p(math.log1p(x)) / (2.0 + math.log1p(x)))
    else:
        l1 = math.log(x)
        l2 = math.log(l1)
        w = l1 - l2 + l2 / l1
    for _ in range(50):
        ew = math.exp(w)
        f = w * ew - x
        wp1 = w + 1.0
        if wp1 == 0.0:
            break
        denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1)
        if denom == 0.0:
            break
        dw = f / denom
        w -= dw
        if abs(dw) <= 4e-16 * (1.0 + abs(w)):
            break
    return w


def lambert_w0_exp(y):
    """``W0(exp(y))`` without forming ``exp(y)`` when it would overflow.

    For ``y > 700`` solve ``w + log(w) = y`` by Newton's method, starting
    from the asymptotic ``y - log(y) + log(y)/y``.
    """
    y = float(y)
    if y <= _EXP_CEILING:
        return lambert_w0(math.exp(y))
    ly = math.log(y)
    w = y - ly + ly / y
    for _ in range(50):
        f = w + math.log(w) - y
        dw = f / (1.0 + 1.0 / w)
        w -= dw
        if abs(dw) <= 4e-16 * w:
            break
    return w


def _check_mu(store, mu):
    if not 0 <= mu < store.count:
        raise ValidationError(f"memory index {mu} out of range for M={store.count}")


def _exponent_gap(store, x, mu, separation):
    X = store.memories
    others = [nu for nu in range(store.count) if nu != mu]
    if separation == "memory":
        return float(X[:, mu] @ x) - float(np.max(X[:, others].T @ X[:, mu]))
    if separation == "query":
        return separation_at(store, mu, x)
    raise ValidationError(f"separation must be 'memory' or 'query', got {separation!r}")


def retrieval_error_bound(store, x, mu, beta, k, separation="memory"):
    """``m (M + k - 2) exp(-beta * gap)`` for a support set of size ``k``.

    With ``separation="memory"`` the gap is
    ``<xi_mu, x> - max_{nu != mu} <xi_mu, xi_nu>``. ``"query"`` uses the
    separation measured at the query, ``min_{nu != mu} <x, xi_mu - xi_nu>``,
    which is the quantity the step error is actually controlled by; it holds
    for every query and temperature, while the memory form can undershoot the
    true error once ``beta * m * R`` is large.
    """
    if store.count < 2:
        raise SingleMemory("the error bound needs M >= 2")
    _check_mu(store, mu)
    beta = check_beta(beta)
    M = store.count
    if not 1 <= k <= M:
        raise ValidationError(f"k={k} outside [1, {M}]")
    x = store.check_query(x)
    gap = _exponent_gap(store, x, mu, separation)
    return max_norm(store) * (M + k - 2) * math.exp(-beta * gap)


def dense_error_bound(store, x, mu, beta, separation="memory"):
    """The full-support case ``2 m (M - 1) exp(-beta * gap)``."""
    return retrieval_error_bound(store, x, mu, beta, store.count, separation)


class BoundCheck(NamedTuple):
    actual: float
    bound: float
    holds: bool


def check_error_bound_dominates(store, x, mu, beta, mask=None, separation="memory", radius_scope="global"):
    """Compare the actual sparse-step error with its bound.

    Requires ``x`` inside the ball of radius R around ``xi_mu`` and ``mu`` in
    the mask; R comes from all memories (``radius_scope="global"``) or from
    the masked ones only (``"masked"``).
    """
    if store.count < 2:
        raise SingleMemory("the error bound needs M >= 2")
    _check_mu(store, mu)
    mask = mask if mask is not None else mask_full(store.count)
    if mu not in mask:
        raise HypothesisViolated(f"memory {mu} is not in the support set")
    R = _scoped_radius(store, mask, radius_scope)
    if R == 0.0:
        raise HypothesisViolated("R = 0: two memories coincide, the sphere is degenerate")
    if not in_sphere(store, x, mu, R):
        raise HypothesisViolated(f"query is outside the sphere of radius {R:g} around memory {mu}")
    actual = float(np.linalg.norm(step_sparse(store, x, beta, mask) - store.memories[:, mu]))
    bound = retrieval_error_bound(store, x, mu, beta, mask.k, separation)
    return BoundCheck(actual, bound, actual <= bound + 1e-12)


def _scoped_radius(store, mask, scope):
    if scope == "global":
        return radius(store)
    if scope == "masked":
        return radius(store, mask.array)
    raise ValidationError(f"scope must be 'masked' or 'global', got {scope!r}")


class Separation(NamedTuple):
    threshold: float
    satisfied: bool


def well_separation(store, mu, beta, k=None, mask=None, scope="masked"):
    """Threshold ``ln((M + k - 2) m / R) / beta + 2 m R`` and whether ``Delta_mu`` meets it.

    In the default ``"masked"`` scope R and ``Delta_mu`` are taken over the
    masked memories only; ``m`` and ``M`` always refer to the whole store.
    """
    beta = check_beta(beta)
    _check_mu(store, mu)
    mask = mask if mask is not None else mask_full(store.count)
    if k is None:
        k = mask.k
    if scope == "masked":
        idx = mask.array
    elif scope == "global":
        idx = np.arange(store.count)
    else:
        raise ValidationError(f"scope must be 'masked' or 'global', got {scope!r}")
    hits = np.flatnonzero(idx == mu)
    if hits.size == 0:
        raise ValidationError(f"memory {mu} is not in the {scope} scope")
    if idx.size < 2:
        raise SingleMemory("well-separation needs two memories in scope")
    R = radius(store, idx)
    if R == 0.0:
        raise DegenerateRadius("R = 0: two memories in scope coincide")
    m = max_norm(store)
    M = store.count
    threshold = math.log((M + k - 2) * m / R) / beta + 2.0 * m * R
    delta = float(separations(store, idx)[hits[0]])
    return Separation(threshold, delta >= threshold)


@dataclass
class Capacity:
    M_sparse: float
    log_M_sparse: float
    a: float
    b: float
    C: float
    w0_argument_log: float
    w0: float


def capacity_lower_bound(d, m, R, beta, k, p):
    """Lower bound ``sqrt(p) C^((d-1)/4)`` on the number of storable patterns.

    ``C = b / W0(exp(a + ln b))`` with
    ``a = 4/(d-1) (ln(m (sqrt(p) + k - 1) / R) + 1)`` and
    ``b = 4 m^2 beta / (5 (d-1))``. The W0 argument is handled in log form,
    so large exponents do not overflow.
    """
    if d < 2:
        raise OutOfDomain(f"d must be >= 2, got {d}")
    for name, v in (("m", m), ("R", R), ("beta", beta)):
        if not (v > 0 and math.isfinite(v)):
            raise OutOfDomain(f"{name} must be positive and finite, got {v}")
    if not 0 < p <= 1:
        raise OutOfDomain(f"p must lie in (0, 1], got {p}")
    if k < 1:
        raise OutOfDomain(f"k must be >= 1, got {k}")
    a = 4.0 / (d - 1) * (math.log(m * (math.sqrt(p) + k - 1) / R) + 1.0)
    b = 4.0 * m * m * beta / (5.0 * (d - 1))
    y = a + math.log(b)
    w = lambert_w0_exp(y)
    C = b / w
    log_M = 0.5 * math.log(p) + (d - 1) / 4.0 * math.log(C)
    M_sparse = math.exp(log_M) if log_M < _EXP_CEILING else math.inf
    return Capacity(M_sparse, log_M, a, b, C, y, w)


@dataclass
class BoundReport:
    capacity_lower: float
    intermediates: dict
    error_bound: float | None = None
    dense_error_bound: float | None = None
    well_separated: list | None = None
    well_separation_thresholds: list | None = None
    notes: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)


def bound_report(d, m, R, beta, k, p, store=None, x=None, mu=None, mask=None):
    """Bundle the capacity bound with, when a store is given, the error and
    well-separation results for that store."""
    cap = capacity_lower_bound(d, m, R, beta, k, p)
    inter = {
        "d": d, "m": m, "R": R, "beta": beta, "k": k, "p": p,
        "a": cap.a, "b": cap.b, "C": cap.C,
        "w0_argument_log": cap.w0_argument_log, "w0": cap.w0,
        "log_capacity_lower": cap.log_M_sparse,
    }
    report = BoundReport(capacity_lower=cap.M_sparse, intermediates=inter)
    if store is not None:
        k_store = min(k, store.count)
        if x is not None and mu is not None:
            report.error_bound = retrieval_error_bound(store, x, mu, beta, k_store)
            report.dense_error_bound = dense_error_bound(store, x, mu, beta)
        mask = mask or mask_full(store.count)
        flags, thresholds = [], []
        for nu in mask.indices:
            try:
                sep = well_separation(store, nu, beta, k=mask.k, mask=mask)
            except (SingleMemory, DegenerateRadius) as exc:
                report.notes.append(f"memory {nu}: {exc}")
                flags.append(False)
                thresholds.append(None)
                continue
            flags.append(sep.satisfied)
            thresholds.append(sep.threshold)
        report.well_separated = flags
        report.well_separation_thresholds = thresholds
    return report
