"""Executable acceptance checks.

Each ``check_*`` function runs one criterion at its stated tolerance and
returns a :class:`CriterionResult`. :func:`run_all` runs them in order;
``nph verify`` prints one line per criterion.
"""

from __future__ import annotations

import itertools
import json
import math
import os
import subprocess
import sys
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bounds import capacity_lower_bound, check_error_bound_dominates, lambert_w0
from .dynamics import DynamicsConfig, feature_scale_for, retrieve, step_dense, step_prf, step_sparse
from .harness.data import gen_sphere_patterns
from .harness.experiments import ExperimentSpec, bound_instance, run_experiment
from .kernels import PrfConfig, default_beta, multinomial_expansion_check, softmax, truncated_softmax_weights
from .masks import mask_full
from .patterns import MemoryStore


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.number:2d} {self.name}: {self.detail} ({self.seconds:.2f}s)"


def _timed(number, name):
    def wrap(fn):
        def run(*args, **kwargs):
            t0 = time.perf_counter()
            passed, detail = fn(*args, **kwargs)
            return CriterionResult(number, name, bool(passed), detail, time.perf_counter() - t0)
        run.__name__ = fn.__name__
        run.__doc__ = fn.__doc__
        run.number = number
        return run
    return wrap


def orthonormal_store(d, M, seed):
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((d, M)))
    return MemoryStore(q)


@_timed(1, "dense one-step recovery")
def check_dense_recovery():
    """Orthonormal d=16, M=8 memories at beta=20: one step from each memory lands within 1e-6."""
    t0 = time.perf_counter()
    store = orthonormal_store(16, 8, seed=0)
    worst = max(
        float(np.linalg.norm(step_dense(store, store.memories[:, mu], 20.0) - store.memories[:, mu]))
        for mu in range(store.count)
    )
    elapsed = time.perf_counter() - t0
    return worst <= 1e-6 and elapsed < 1.0, f"max error {worst:.3e} (<= 1e-6), sweep {elapsed * 1e3:.1f} ms (< 1 s)"


BOUND_GRID = [(d, M, kind) for d in (8, 16) for M in (4, 16) for kind in ("full", "topk", "window")]


def bound_instances(n=1000, seed=0):
    """The seeded instances shared by the bound-domination and sparse-vs-dense checks."""
    for i in range(n):
        d, M, kind = BOUND_GRID[i % len(BOUND_GRID)]
        yield bound_instance(np.random.default_rng([seed, i]), d, M, kind)


@_timed(2, "error bound dominates actual error")
def check_error_bound(n=1000, seed=0):
    t0 = time.perf_counter()
    holds = 0
    worst = -math.inf
    for store, x, mu, mask, beta in bound_instances(n, seed):
        chk = check_error_bound_dominates(store, x, mu, beta, mask)
        holds += chk.holds
        worst = max(worst, chk.actual - chk.bound)
    elapsed = time.perf_counter() - t0
    return (holds == n and elapsed < 10.0,
            f"{holds}/{n} instances bounded, max(actual - bound) = {worst:.3e}, {elapsed:.2f} s (< 10 s)")


@_timed(3, "sparse error <= dense error")
def check_sparse_not_worse(n=1000, seed=0):
    violations = 0
    worst = -math.inf
    for store, x, mu, mask, beta in bound_instances(n, seed):
        xi = store.memories[:, mu]
        e_sparse = float(np.linalg.norm(step_sparse(store, x, beta, mask) - xi))
        e_dense = float(np.linalg.norm(step_dense(store, x, beta) - xi))
        violations += e_sparse > e_dense + 1e-12
        worst = max(worst, e_sparse - e_dense)
    return violations == 0, f"{violations}/{n} violations, max(sparse - dense) = {worst:.3e}"


@_timed(4, "full mask reduces to dense")
def check_full_mask_reduction(n=100, seed=0):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        d = int(rng.integers(1, 33))
        M = int(rng.integers(1, 65))
        store = MemoryStore(rng.standard_normal((d, M)))
        x = rng.standard_normal(d)
        beta = float(rng.uniform(0.05, 5.0))
        diff = np.abs(step_sparse(store, x, beta, mask_full(M)) - step_dense(store, x, beta))
        worst = max(worst, float(diff.max()))
    return worst <= 1e-12, f"max |sparse(full) - dense| = {worst:.3e} over {n} shapes (<= 1e-12)"


@_timed(5, "energy monotone and convergent")
def check_energy(n=100, seed=0):
    betas = (0.5, 1.0, 4.0)
    rising = 0
    unconverged = 0
    worst_rise = -math.inf
    max_steps = 0
    for i in range(n):
        rng = np.random.default_rng([seed, i])
        store = MemoryStore(rng.standard_normal((16, 8)))
        beta = betas[i % len(betas)]
        out = retrieve(store, rng.standard_normal(16), DynamicsConfig(beta=beta, tol=1e-8, max_iters=100), record=True)
        e = np.array(out.energy_trace)
        rise = float(np.max(np.diff(e))) if e.size > 1 else 0.0
        worst_rise = max(worst_rise, rise)
        rising += rise > 1e-10
        unconverged += not out.converged
        max_steps = max(max_steps, out.steps)
    return (rising == 0 and unconverged == 0,
            f"{rising}/{n} energy increases (max rise {worst_rise:.2e}), "
            f"{unconverged}/{n} unconverged, max {max_steps} steps")


def _bisect_w0(x, lo=0.0, hi=1.0):
    """Bisection on ``w e^w = x`` for ``x`` in ``[0, e]``."""
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid * math.exp(mid) < x:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def lambert_grid():
    """``10^4`` points: log-spaced positives, a branch-point neighborhood and the negative range."""
    pos = np.logspace(-8, 8, 7000)
    near = -math.exp(-1.0) + np.logspace(-15, -1, 2000)
    neg = -np.logspace(-8, math.log10(math.exp(-1.0)), 1000, endpoint=False)
    return np.concatenate([pos, near, neg])


@_timed(6, "Lambert W0 accuracy")
def check_lambert():
    worst = 0.0
    grid = lambert_grid()
    for x in grid:
        w = lambert_w0(float(x))
        worst = max(worst, abs(w * math.exp(w) - x) / max(1.0, abs(x)))
    w1 = lambert_w0(1.0)
    oracle = _bisect_w0(1.0)
    ok = worst <= 1e-12 and abs(w1 - oracle) <= 1e-11
    return ok, (f"max scaled residual {worst:.2e} on {grid.size} points (<= 1e-12), "
                f"|W0(1) - bisection| = {abs(w1 - oracle):.1e} (<= 1e-11)")


# d-sweep temperature: C > 1 (so capacity grows with d) needs b > a
CAPACITY_D_SWEEP = {"m": 1.0, "R": 0.3, "beta": 20.0, "k": 1, "p": 0.95}
CAPACITY_K_SWEEP = {"d": 64, "m": 1.0, "R": 0.3, "beta": 1.0, "p": 0.95}


@_timed(7, "capacity formula")
def check_capacity():
    worst = 0.0
    points = 0
    for d, k, beta, p in itertools.product((2, 8, 16, 32, 64, 128, 1024), (1, 4, 16, 64),
                                          (0.01, 0.1, 1.0, 20.0, 1e3, 1e6), (0.9, 0.95, 0.99)):
        cap = capacity_lower_bound(d, 1.0, 0.3, beta, k, p)
        # the identity, plus W0 itself checked in log form: w + ln w = a + ln b
        worst = max(worst, abs(cap.C * cap.w0 - cap.b) / cap.b,
                    abs(cap.w0 + math.log(cap.w0) - cap.w0_argument_log) / max(1.0, abs(cap.w0_argument_log)))
        points += 1
    ks = (1, 4, 16, 64)
    by_k = [capacity_lower_bound(k=k, **CAPACITY_K_SWEEP).log_M_sparse for k in ks]
    k_ok = all(b <= a for a, b in zip(by_k, by_k[1:]))
    ds = (8, 16, 32, 64)
    caps = [capacity_lower_bound(d=d, **CAPACITY_D_SWEEP) for d in ds]
    by_d = [c.log_M_sparse for c in caps]
    d_ok = all(b > a for a, b in zip(by_d, by_d[1:]))
    # slope of log M against (d-1)/4 log C
    xs = np.array([(d - 1) / 4 * math.log(c.C) for d, c in zip(ds, caps)])
    slope = float(np.polyfit(xs, np.array(by_d), 1)[0])
    ok = worst <= 1e-9 and k_ok and d_ok and slope > 0
    return ok, (f"identity residual {worst:.1e} over {points} points (<= 1e-9); "
                f"log M over k {ks}: {_fmt(by_k)}; over d {ds}: {_fmt(by_d)}; slope {slope:.3f}")


def _fmt(vals):
    return "[" + ", ".join(f"{v:.3g}" for v in vals) + "]"


@_timed(8, "polynomial kernel oracle")
def check_kernel_oracle(seed=0):
    rng = np.random.default_rng(seed)
    worst_w = 0.0
    for _ in range(200):
        d = int(rng.integers(2, 9))
        M = int(rng.integers(2, 9))
        X = rng.standard_normal((d, M))
        x = rng.standard_normal(d)
        beta = float(rng.uniform(0.1, 2.0))
        # rescale so that every |beta <x, xi>| <= 2
        scale = max(1e-12, float(np.max(np.abs(beta * (X.T @ x)))))
        x *= 2.0 / scale * rng.uniform(0.2, 1.0)
        exact = softmax(beta, X.T @ x)
        approx = truncated_softmax_weights(beta, x, X, 30)
        worst_w = max(worst_w, float(np.max(np.abs(exact - approx))))
    worst_m = 0.0
    for d in range(1, 5):
        for n in range(0, 7):
            for _ in range(3):
                x = rng.integers(-3, 4, size=d).astype(float)
                y = rng.integers(-3, 4, size=d).astype(float)
                lhs, rhs = multinomial_expansion_check(x, y, n)
                worst_m = max(worst_m, abs(lhs - rhs) / max(1.0, abs(lhs)))
    ok = worst_w <= 1e-9 and worst_m <= 1e-10
    return ok, f"max weight error {worst_w:.1e} (<= 1e-9), multinomial residual {worst_m:.1e} (<= 1e-10)"


def _prf_error(store, x, beta, features, seed):
    cfg = PrfConfig(features, seed, store.dim)
    dense = step_dense(store, x, beta)
    prf = step_prf(store, x, cfg, feature_scale_for(beta))
    return float(np.linalg.norm(prf - dense) / np.linalg.norm(dense))


@_timed(9, "PRF approximation")
def check_prf(features=10_000, seeds=10):
    store = gen_sphere_patterns(8, 4, 1.0, 0)
    beta = default_beta(8)
    x = store.memories[:, 0]
    err0 = _prf_error(store, x, beta, features, 0)
    small = [_prf_error(store, x, beta, features, s) for s in range(seeds)]
    large = [_prf_error(store, x, beta, 4 * features, s) for s in range(seeds)]
    ok = err0 <= 0.10 and np.mean(large) < np.mean(small)
    return ok, (f"relative error {err0:.3%} at D={features} seed 0 (<= 10%); "
                f"mean over {seeds} seeds {np.mean(small):.3%} -> {np.mean(large):.3%} at D={4 * features}")


HALFMASK_M = [10, 25, 50, 100, 200]


def halfmask_rates(variant="dense", mask="full", seed=0, trials=50):
    spec = ExperimentSpec(kind="halfmask", d=[64], m_range=HALFMASK_M, variant=variant,
                          mask=mask, trials=trials, theta=0.2, seed=seed)
    return [row["success_rate"] for row in run_experiment(spec).rows]


@_timed(10, "half-mask sweep shape")
def check_halfmask():
    dense = halfmask_rates()
    rand = halfmask_rates("sparse", "random:frac=0.25")
    monotone = all(b <= a + 0.05 for a, b in zip(dense, dense[1:]))
    worse = float(np.mean(rand)) < float(np.mean(dense))
    return monotone and worse, f"dense {_fmt(dense)}, random k=M/4 {_fmt(rand)}"


def _bench_json(out, threads):
    env = dict(os.environ, NPH_THREADS=str(threads))
    cmd = [sys.executable, "-m", "nph", "bench", "halfmask", "--d", "32", "--m-range", "5,20,40",
           "--trials", "8", "--seed", "11", "--variant", "sparse", "--mask", "random:frac=0.5",
           "--out", str(out)]
    subprocess.run(cmd, check=True, env=env, capture_output=True)
    return json.loads(Path(out).read_text())


def strip_timing(doc):
    from .harness.experiments import TIMING_FIELDS
    doc = dict(doc)
    doc["rows"] = [{k: v for k, v in r.items() if k not in TIMING_FIELDS} for r in doc["rows"]]
    return json.dumps(doc, indent=2, sort_keys=True).encode()


@_timed(11, "bench determinism")
def check_determinism():
    with tempfile.TemporaryDirectory() as tmp:
        a = strip_timing(_bench_json(Path(tmp) / "a.json", 1))
        b = strip_timing(_bench_json(Path(tmp) / "b.json", 4))
    same = a == b
    return same, f"two runs (1 and 4 threads) {'byte-identical' if same else 'differ'} ({len(a)} bytes)"


CHECKS = [
    check_dense_recovery,
    check_error_bound,
    check_sparse_not_worse,
    check_full_mask_reduction,
    check_energy,
    check_lambert,
    check_capacity,
    check_kernel_oracle,
    check_prf,
    check_halfmask,
    check_determinism,
]


def run_all(only=None, stream=None):
    results = []
    for check in CHECKS:
        if only and check.number not in only:
            continue
        res = check()
        results.append(res)
        if stream is not None:
            print(res.line(), file=stream, flush=True)
    return results
