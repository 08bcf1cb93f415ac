"""Desk-scale retrieval experiments.

Each experiment is a grid of independent cells. Cell ``i`` draws all of its
randomness from ``seed ^ i`` and trial ``t`` inside it from
``default_rng([seed ^ i, t])``, so results do not depend on scheduling.
Variant and mask choices never consume randomness from that stream: two runs
that differ only in the retrieval variant see the same stores and queries.
"""

from __future__ import annotations

import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .. import __version__
from ..bounds import capacity_lower_bound, check_error_bound_dominates
from ..dynamics import Dense, DynamicsConfig, Linear, Prf, Sparse, feature_scale_for, retrieve, step, step_dense
from ..errors import NPHError, ValidationError
from ..kernels import PrfConfig, default_beta
from ..masks import build_mask, default_window, mask_random, mask_window, parse_mask_spec, topk_indices, SupportMask
from ..patterns import max_norm, radius
from .data import gen_sphere_patterns, half_mask_query, noisy_query
from .io import rows_to_csv

SCHEMA = "nph.results"
SCHEMA_VERSION = 1
KINDS = ("halfmask", "noise", "capacity", "boundcheck", "timing")
VARIANTS = ("dense", "sparse", "linear", "prf")
TIMING_FIELDS = ("wall_time_ns", "ns_per_query")
# default noise variances: 0.1 .. 1.4
NOISE_GRID = tuple(round(0.1 * i, 1) for i in range(1, 15))


@dataclass
class ExperimentSpec:
    """One experiment grid.

    ``radius`` defaults to ``sqrt(d)`` (entries of unit scale) and ``beta``
    to ``1/sqrt(d)``. ``mask`` uses the ``--mask`` spelling and only applies
    to the sparse variant. ``k_range`` gives support sizes for the masked
    timing sweep.
    """

    kind: str
    d: list = field(default_factory=lambda: [64])
    m_range: list = field(default_factory=lambda: [10, 25, 50, 100, 200])
    variant: str = "dense"
    mask: str = "full"
    beta: float | None = None
    noise: list = field(default_factory=lambda: list(NOISE_GRID))
    trials: int = 50
    theta: float = 0.2
    seed: int = 0
    radius: float | None = None
    tol: float = 1e-8
    max_iters: int = 100
    renormalize: bool = False
    prf_features: int = 256
    prf_seed: int = 0
    k_range: list = field(default_factory=list)
    p: float = 0.95

    def __post_init__(self):
        self.d = [int(v) for v in _as_list(self.d)]
        self.m_range = [int(v) for v in _as_list(self.m_range)]
        self.noise = [float(v) for v in _as_list(self.noise)]
        self.k_range = [int(v) for v in _as_list(self.k_range)]
        if self.kind not in KINDS:
            raise ValidationError(f"unknown experiment kind {self.kind!r}; expected one of {KINDS}")
        if self.variant not in VARIANTS:
            raise ValidationError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.trials < 1:
            raise ValidationError("trials must be >= 1")
        if not 0 < self.theta < 1:
            raise ValidationError(f"theta must lie in (0, 1), got {self.theta}")
        if not self.d or not self.m_range:
            raise ValidationError("d and M ranges must be nonempty")
        if any(v < 1 for v in self.d) or any(v < 1 for v in self.m_range):
            raise ValidationError("d and M values must be >= 1")
        if self.kind == "noise" and not self.noise:
            raise ValidationError("noise sweep needs at least one variance")
        if any(v < 0 for v in self.noise):
            raise ValidationError("noise variances must be nonnegative")
        if self.radius is not None and not self.radius > 0:
            raise ValidationError("radius must be positive")
        self.mask_kind, self.mask_params = parse_mask_spec(self.mask)
        if self.variant != "sparse" and self.mask_kind != "full":
            raise ValidationError(f"mask {self.mask!r} needs --variant sparse")
        if self.beta is not None and not (self.beta > 0 and math.isfinite(self.beta)):
            raise ValidationError(f"beta must be positive and finite, got {self.beta}")

    def to_dict(self):
        out = asdict(self)
        out.pop("mask_kind", None)
        out.pop("mask_params", None)
        return out

    def beta_for(self, d):
        return default_beta(d) if self.beta is None else float(self.beta)

    def radius_for(self, d):
        return math.sqrt(d) if self.radius is None else float(self.radius)


def _as_list(v):
    if v is None:
        return []
    if isinstance(v, (list, tuple)):
        return list(v)
    return [v]


@dataclass
class ResultTable:
    rows: list
    metadata: dict

    def to_dict(self, omit_timing=False):
        rows = self.rows
        if omit_timing:
            rows = [{k: v for k, v in r.items() if k not in TIMING_FIELDS} for r in rows]
        return {
            "schema": SCHEMA,
            "schema_version": SCHEMA_VERSION,
            "metadata": self.metadata,
            "rows": rows,
        }

    def to_json(self, omit_timing=False):
        return json.dumps(self.to_dict(omit_timing), indent=2, sort_keys=True) + "\n"

    def to_csv(self, omit_timing=False):
        return rows_to_csv(self.to_dict(omit_timing)["rows"])


def thread_count():
    """Worker threads: ``NPH_THREADS`` if set, else the CPU count."""
    env = os.environ.get("NPH_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ValidationError(f"NPH_THREADS must be an integer, got {env!r}") from None
        if n < 1:
            raise ValidationError("NPH_THREADS must be >= 1")
        return n
    return os.cpu_count() or 1


def relative_error(out, target):
    """``sum (out - target)^2 / sum target^2``."""
    diff = out - target
    return float(diff @ diff) / float(target @ target)


def _trial_rng(cell_seed, t):
    return np.random.default_rng([cell_seed, t])


def _seed64(rng):
    return int(rng.integers(0, 2**63))


class _VariantFactory:
    """Builds the dynamics config for one query; caches PRF projections."""

    def __init__(self, spec, d):
        self.spec = spec
        self.beta = spec.beta_for(d)
        self._prf = None
        if spec.variant == "prf":
            self._prf = PrfConfig(spec.prf_features, spec.prf_seed, d)

    def config(self, store, x, position, mask_seed):
        spec = self.spec
        if spec.variant == "dense":
            variant = Dense()
        elif spec.variant == "sparse":
            mask = build_mask(spec.mask_kind, spec.mask_params, store, x, position, mask_seed)
            variant = Sparse(mask, spec.renormalize)
        elif spec.variant == "linear":
            variant = Linear(feature_scale_for(self.beta))
        else:
            variant = Prf(self._prf, feature_scale_for(self.beta))
        return DynamicsConfig(variant, self.beta, spec.tol, spec.max_iters)


def _retrieval_cell(spec, params, cell_seed, make_query):
    d, M = params["d"], params["M"]
    factory = _VariantFactory(spec, d)
    successes = 0
    errors, steps = [], []
    for t in range(spec.trials):
        rng = _trial_rng(cell_seed, t)
        store = gen_sphere_patterns(d, M, spec.radius_for(d), _seed64(rng))
        mu = int(rng.integers(M))
        query_seed = _seed64(rng)
        mask_seed = _seed64(rng)
        target = store.memories[:, mu]
        x0 = make_query(target, query_seed)
        out = retrieve(store, x0, factory.config(store, x0, mu, mask_seed))
        err = relative_error(out.retrieved, target)
        successes += err <= spec.theta
        errors.append(err)
        steps.append(out.steps)
    return {
        "successes": successes,
        "success_rate": successes / spec.trials,
        "mean_error": float(np.mean(errors)),
        "mean_steps": float(np.mean(steps)),
    }


def _halfmask_cell(spec, params, cell_seed):
    return _retrieval_cell(spec, params, cell_seed, lambda xi, s: half_mask_query(xi))


def _noise_cell(spec, params, cell_seed):
    var = params["noise"]
    return _retrieval_cell(spec, params, cell_seed, lambda xi, s: noisy_query(xi, var, s))


def _capacity_cell(spec, params, cell_seed):
    """Stored patterns as queries, plus the analytical capacity bound."""
    out = _retrieval_cell(spec, params, cell_seed, lambda xi, s: xi.copy())
    d, M = params["d"], params["M"]
    k = M
    if spec.variant == "sparse" and spec.mask_kind in ("random", "topk"):
        p = spec.mask_params
        k = p["k"] if "k" in p else max(1, round(p["frac"] * M))
    elif spec.variant == "sparse" and spec.mask_kind == "window":
        k = spec.mask_params.get("w") or default_window(M)
    if d >= 2 and M >= 2:
        # bound evaluated on the first trial's store geometry
        rng = _trial_rng(cell_seed, 0)
        store = gen_sphere_patterns(d, M, spec.radius_for(d), _seed64(rng))
        R = radius(store)
        if R > 0:
            cap = capacity_lower_bound(d, max_norm(store), R, spec.beta_for(d), min(k, M), spec.p)
            out["log_capacity_lower"] = cap.log_M_sparse
            out["capacity_C"] = cap.C
    return out


def bound_instance(rng, d, M, mask_kind, beta=None):
    """One bound-verification instance on unit-sphere memories.

    Returns ``(store, x, mu, mask, beta)`` with ``x`` uniform in the ball of
    radius R around ``xi_mu`` and ``mu`` in the mask. Top-K uses
    ``K = max(1, M // 2)``; the window is centered on ``mu`` with the default
    width; a top-K draw that misses ``mu`` is redrawn.
    """
    store = gen_sphere_patterns(d, M, 1.0, _seed64(rng))
    beta = default_beta(d) if beta is None else beta
    mu = int(rng.integers(M))
    R = radius(store)
    xi = store.memories[:, mu]
    while True:
        u = rng.standard_normal(d)
        u /= np.linalg.norm(u)
        # strictly inside the ball so rounding cannot push x out
        r = 0.999 * R * rng.random() ** (1.0 / d)
        x = xi + r * u
        if mask_kind == "full":
            mask = SupportMask(tuple(range(M)), M, "full")
        elif mask_kind == "topk":
            K = max(1, M // 2)
            idx = topk_indices(store.memories.T @ x, K)
            if mu not in idx:
                continue
            mask = SupportMask(idx, M, "topk", {"k": K})
        elif mask_kind == "window":
            mask = mask_window(M, M, mu)
        else:
            raise ValidationError(f"unknown mask kind {mask_kind!r}")
        return store, x, mu, mask, beta


def _boundcheck_cell(spec, params, cell_seed):
    d, M, kind = params["d"], params["M"], params["mask"]
    holds = 0
    faster = 0
    worst_margin = -math.inf
    errors = []
    for t in range(spec.trials):
        rng = _trial_rng(cell_seed, t)
        store, x, mu, mask, beta = bound_instance(rng, d, M, kind, spec.beta)
        chk = check_error_bound_dominates(store, x, mu, beta, mask)
        holds += chk.holds
        worst_margin = max(worst_margin, chk.actual - chk.bound)
        dense_err = float(np.linalg.norm(step_dense(store, x, beta) - store.memories[:, mu]))
        faster += chk.actual <= dense_err + 1e-12
        errors.append(chk.actual)
    return {
        "successes": holds,
        "success_rate": holds / spec.trials,
        "mean_error": float(np.mean(errors)),
        "sparse_le_dense": faster,
        "max_excess": worst_margin,
    }


def _timing_cell(spec, params, cell_seed):
    d, M = params["d"], params["M"]
    k = params.get("k")
    beta = spec.beta_for(d)
    rng = _trial_rng(cell_seed, 0)
    store = gen_sphere_patterns(d, M, spec.radius_for(d), _seed64(rng))
    factory = _VariantFactory(spec, d)
    queries = []
    for _ in range(spec.trials):
        mu = int(rng.integers(M))
        queries.append((mu, half_mask_query(store.memories[:, mu]), _seed64(rng)))
    configs = []
    for mu, x, s in queries:
        if k is not None:
            configs.append(DynamicsConfig(Sparse(mask_random(M, k, s)), beta))
        else:
            configs.append(factory.config(store, x, mu, s))
    # warm caches (linear summaries) before timing
    step(store, queries[0][1], configs[0])
    successes = 0
    errors = []
    t0 = time.perf_counter_ns()
    outs = [step(store, x, cfg) for (_, x, _), cfg in zip(queries, configs)]
    elapsed = time.perf_counter_ns() - t0
    for (mu, _, _), out in zip(queries, outs):
        err = relative_error(out, store.memories[:, mu])
        successes += err <= spec.theta
        errors.append(err)
    return {
        "successes": successes,
        "success_rate": successes / spec.trials,
        "mean_error": float(np.mean(errors)),
        "mean_steps": 1.0,
        "ns_per_query": elapsed / spec.trials,
    }


def cells(spec):
    """Parameter dicts of the experiment grid, in cell-index order."""
    if spec.kind == "noise":
        return [{"d": d, "M": M, "noise": v} for d in spec.d for M in spec.m_range for v in spec.noise]
    if spec.kind == "boundcheck":
        return [
            {"d": d, "M": M, "mask": kind}
            for d in spec.d for M in spec.m_range for kind in ("full", "topk", "window")
            if M >= 2
        ]
    if spec.kind == "timing" and spec.k_range:
        return [{"d": d, "M": M, "k": k} for d in spec.d for M in spec.m_range for k in spec.k_range if k <= M]
    return [{"d": d, "M": M} for d in spec.d for M in spec.m_range]


_RUNNERS = {
    "halfmask": _halfmask_cell,
    "noise": _noise_cell,
    "capacity": _capacity_cell,
    "boundcheck": _boundcheck_cell,
    "timing": _timing_cell,
}


def run_experiment(spec, threads=None):
    """Run every cell of ``spec`` and merge the rows by cell index."""
    grid = cells(spec)
    if not grid:
        raise ValidationError("experiment grid is empty")
    runner = _RUNNERS[spec.kind]

    def job(i):
        params = grid[i]
        t0 = time.perf_counter_ns()
        try:
            res = runner(spec, params, (spec.seed ^ i) & ((1 << 63) - 1))
        except NPHError as exc:
            raise type(exc)(f"cell {i} {params}: {exc}") from exc
        row = {"cell": i, **params, "trials": spec.trials, **res}
        row["wall_time_ns"] = time.perf_counter_ns() - t0
        return row

    workers = min(threads or thread_count(), len(grid))
    if workers == 1:
        rows = [job(i) for i in range(len(grid))]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(job, range(len(grid))))
    metadata = {
        "kind": spec.kind,
        "seed": spec.seed,
        "spec": spec.to_dict(),
        "version": f"nph {__version__}",
    }
    return ResultTable(rows, metadata)
