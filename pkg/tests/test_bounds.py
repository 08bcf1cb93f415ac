import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from nph.bounds import (
    bound_report,
    capacity_lower_bound,
    check_error_bound_dominates,
    dense_error_bound,
    lambert_w0,
    lambert_w0_exp,
    retrieval_error_bound,
    well_separation,
)
from nph.dynamics import DynamicsConfig, Sparse, retrieve, step_sparse
from nph.errors import DegenerateRadius, HypothesisViolated, OutOfDomain, SingleMemory, ValidationError
from nph.masks import SupportMask, mask_full, mask_topk, mask_window
from nph.patterns import MemoryStore, max_norm, radius

from conftest import orthonormal, unit_store


def bisect(f, lo, hi, iters=300):
    """Root of an increasing function on [lo, hi]."""
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if f(mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def w0_oracle(x):
    if x >= 0:
        return bisect(lambda w: w * math.exp(w) - x, 0.0, max(1.0, math.log1p(x)))
    return bisect(lambda w: w * math.exp(w) - x, -1.0, 0.0)


def admissible(seed, d=8, M=6):
    rng = np.random.default_rng(seed)
    s = unit_store(d, M, seed)
    mu = int(rng.integers(M))
    R = radius(s)
    u = rng.standard_normal(d)
    x = s.memories[:, mu] + 0.99 * R * rng.random() * u / np.linalg.norm(u)
    return rng, s, x, mu


def separated_store():
    """One long memory on axis 0 and a tight cluster of short ones: well separated."""
    X = np.zeros((4, 5))
    X[0, 0] = 10.0
    X[1:, 1:] = 0.1 * np.eye(3, 4) + 0.05 * np.eye(3, 4, 1)
    return MemoryStore(X)


class TestErrorBound:
    def test_orthonormal_example(self):
        s = MemoryStore(np.eye(2))
        assert retrieval_error_bound(s, np.array([1.0, 0.0]), 0, 1.0, 1) == pytest.approx(math.exp(-1), rel=1e-15)

    def test_full_support_is_dense_bound(self, rng):
        s = MemoryStore(rng.standard_normal((5, 7)))
        x = rng.standard_normal(5)
        X = s.memories
        gap = X[:, 2] @ x - max(X[:, 2] @ X[:, nu] for nu in range(7) if nu != 2)
        expected = 2 * max_norm(s) * 6 * math.exp(-0.7 * gap)
        assert retrieval_error_bound(s, x, 2, 0.7, 7) == dense_error_bound(s, x, 2, 0.7)
        assert dense_error_bound(s, x, 2, 0.7) == pytest.approx(expected, rel=1e-12)

    def test_zero_temperature_limit(self, rng):
        s = MemoryStore(rng.standard_normal((3, 5)))
        x = rng.standard_normal(3)
        assert retrieval_error_bound(s, x, 0, 1e-14, 3) == pytest.approx(max_norm(s) * 6, rel=1e-10)

    def test_validation(self):
        s = MemoryStore(np.eye(3))
        with pytest.raises(SingleMemory):
            retrieval_error_bound(MemoryStore(np.ones((2, 1))), np.ones(2), 0, 1.0, 1)
        with pytest.raises(ValidationError):
            retrieval_error_bound(s, np.ones(3), 0, 1.0, 4)
        with pytest.raises(ValidationError):
            retrieval_error_bound(s, np.ones(3), 3, 1.0, 1)
        with pytest.raises(ValidationError):
            retrieval_error_bound(s, np.ones(3), 0, 1.0, 1, separation="other")

    @given(st.integers(0, 10_000), st.floats(0.01, 30))
    def test_monotone_in_k(self, seed, beta):
        _, s, x, mu = admissible(seed)
        vals = [retrieval_error_bound(s, x, mu, beta, k) for k in range(1, s.count + 1)]
        assert all(b >= a for a, b in zip(vals, vals[1:]))
        assert vals[-1] == dense_error_bound(s, x, mu, beta)

    @given(st.integers(0, 10_000), st.floats(0.1, 10))
    def test_continuous_in_beta(self, seed, beta):
        _, s, x, mu = admissible(seed)
        a = retrieval_error_bound(s, x, mu, beta, 3)
        b = retrieval_error_bound(s, x, mu, beta * (1 + 1e-9), 3)
        assert abs(a - b) <= 1e-6 * a + 1e-300


class TestDomination:
    def test_orthonormal_full_mask(self):
        s = orthonormal(6, 4, seed=0)
        for mu in range(4):
            chk = check_error_bound_dominates(s, s.memories[:, mu], mu, 5.0, mask_full(4))
            assert chk.holds and chk.actual <= chk.bound

    def test_degenerate_radius(self):
        s = MemoryStore(np.array([[1.0, 1.0, 0.0], [0.0, 0.0, 1.0]]))
        with pytest.raises(HypothesisViolated):
            check_error_bound_dominates(s, s.memories[:, 0], 0, 1.0)

    def test_target_outside_mask(self):
        s = orthonormal(4, 3)
        with pytest.raises(HypothesisViolated):
            check_error_bound_dominates(s, s.memories[:, 0], 0, 1.0, SupportMask((1, 2), 3, "random"))

    def test_query_outside_sphere(self):
        s = orthonormal(4, 3)
        with pytest.raises(HypothesisViolated):
            check_error_bound_dominates(s, s.memories[:, 1], 0, 1.0)

    def test_actual_is_sparse_step_error(self):
        _, s, x, mu = admissible(3)
        mask = mask_topk(s, x, 3)
        assert mu in mask
        chk = check_error_bound_dominates(s, x, mu, 0.5, mask)
        assert chk.actual == float(np.linalg.norm(step_sparse(s, x, 0.5, mask) - s.memories[:, mu]))
        assert chk.bound == retrieval_error_bound(s, x, mu, 0.5, 3)

    @given(st.integers(0, 100_000), st.floats(0.01, 50), st.sampled_from(["full", "topk", "window"]))
    def test_query_separation_form_always_holds(self, seed, beta, kind):
        """The bound with the separation measured at the query is valid at any temperature."""
        _, s, x, mu = admissible(seed, d=6, M=5)
        mask = {"full": mask_full(5), "topk": mask_topk(s, x, 2), "window": mask_window(5, 5, mu)}[kind]
        assume(mu in mask)
        assert check_error_bound_dominates(s, x, mu, beta, mask, separation="query").holds

    def test_memory_form_can_undershoot_at_low_temperature(self):
        """Documents why the query form exists: at large beta the memory form is not a bound."""
        misses = 0
        for seed in range(300):
            _, s, x, mu = admissible(seed, d=8, M=4)
            misses += not check_error_bound_dominates(s, x, mu, 20.0).holds
        assert misses > 0

    def test_default_temperature_memory_form(self):
        for seed in range(200):
            _, s, x, mu = admissible(seed, d=8, M=4)
            assert check_error_bound_dominates(s, x, mu, 1 / math.sqrt(8)).holds


class TestWellSeparation:
    def test_orthonormal_never_satisfied(self):
        s = MemoryStore(np.eye(2))
        for beta in (0.1, 1.0, 1e3, 1e9):
            sep = well_separation(s, 0, beta)
            assert sep.threshold == pytest.approx(math.log(2 / (math.sqrt(2) / 2)) / beta + math.sqrt(2))
            assert not sep.satisfied

    def test_low_temperature_limit(self):
        s = unit_store(5, 4, seed=1)
        sep = well_separation(s, 0, 1e15)
        assert sep.threshold == pytest.approx(2 * max_norm(s) * radius(s), rel=1e-12)

    def test_scaling(self):
        s = unit_store(5, 4, seed=2)
        t = s.scaled(2.0)
        a, b = well_separation(s, 1, 0.8), well_separation(t, 1, 0.8)
        ln_term = math.log(6 * max_norm(s) / radius(s)) / 0.8
        assert a.threshold == pytest.approx(ln_term + 2 * max_norm(s) * radius(s), rel=1e-12)
        assert b.threshold == pytest.approx(ln_term + 4 * 2 * max_norm(s) * radius(s), rel=1e-12)

    def test_masked_scope(self):
        s = MemoryStore(np.array([[0.0, 1.0, 10.0]]))
        mask = SupportMask((0, 2), 3, "random")
        masked = well_separation(s, 2, 1.0, mask=mask)
        expected = math.log((3 + 2 - 2) * 10 / 5.0) + 2 * 10 * 5.0
        assert masked.threshold == pytest.approx(expected, rel=1e-14)
        glob = well_separation(s, 2, 1.0, mask=mask, scope="global")
        assert glob.threshold == pytest.approx(math.log(3 * 10 / 0.5) + 2 * 10 * 0.5, rel=1e-14)

    def test_errors(self):
        with pytest.raises(DegenerateRadius):
            well_separation(MemoryStore(np.ones((2, 2))), 0, 1.0)
        with pytest.raises(SingleMemory):
            well_separation(MemoryStore(np.eye(3)), 0, 1.0, mask=SupportMask((0,), 3, "random"))
        with pytest.raises(ValidationError):
            well_separation(MemoryStore(np.eye(3)), 0, 1.0, mask=SupportMask((1, 2), 3, "random"))

    def test_sufficiency(self):
        """When the condition holds, every iterate from x0 in the sphere stays in the sphere."""
        s = separated_store()
        rng = np.random.default_rng(0)
        for mask in (mask_full(5), SupportMask((0, 2, 4), 5, "random"), mask_window(5, 5, 1, 3)):
            sep = well_separation(s, 0, 1.0, mask=mask)
            assert sep.satisfied
            R = radius(s, mask.array)
            xi = s.memories[:, 0]
            for _ in range(50):
                u = rng.standard_normal(4)
                x0 = xi + R * rng.random() ** 0.25 * u / np.linalg.norm(u)
                out = retrieve(s, x0, DynamicsConfig(Sparse(mask), beta=1.0), record=True)
                assert all(np.linalg.norm(x - xi) <= R for x in out.trajectory)


class TestLambert:
    def test_examples(self):
        assert lambert_w0(0.0) == 0.0
        assert lambert_w0(math.e) == pytest.approx(1.0, abs=1e-15)
        assert lambert_w0(1.0) == pytest.approx(0.567143290409784, abs=1e-15)
        assert abs(lambert_w0(1.0) - w0_oracle(1.0)) <= 1e-12

    def test_branch_point(self):
        assert lambert_w0(-math.exp(-1.0)) == pytest.approx(-1.0, abs=1e-7)
        with pytest.raises(OutOfDomain):
            lambert_w0(-0.3680)
        with pytest.raises(OutOfDomain):
            lambert_w0(math.nan)

    @pytest.mark.parametrize("x", [-0.36, -0.3, -0.1, 1e-10, 0.2, 0.5, 2.0, math.e, 10.0, 1e4, 1e10, 1e100, 1e300])
    def test_matches_bisection(self, x):
        assert lambert_w0(x) == pytest.approx(w0_oracle(x), rel=1e-13, abs=1e-16)

    @given(st.floats(-math.exp(-1.0) + 1e-12, 1e12))
    def test_round_trip(self, x):
        w = lambert_w0(x)
        assert w >= -1.0
        assert abs(w * math.exp(w) - x) <= 1e-13 * max(1.0, abs(x))

    def test_round_trip_near_branch(self):
        for eps in np.logspace(-16, -1, 400):
            x = -math.exp(-1.0) + eps
            w = lambert_w0(x)
            assert abs(w * math.exp(w) - x) <= 1e-13

    @pytest.mark.parametrize("y", [1.0, 50.0, 699.0, 700.5, 1e3, 1e5, 1e12])
    def test_exp_argument(self, y):
        w = lambert_w0_exp(y)
        assert abs(w + math.log(w) - y) <= 1e-13 * y
        oracle = bisect(lambda v: v + math.log(v) - y, 1e-300 if y < 1 else 0.5, y + 1)
        assert w == pytest.approx(oracle, rel=1e-13)

    def test_exp_argument_continuous_at_switch(self):
        # both sides of the switch agree with the first-order expansion dw/dy = w / (1 + w)
        h = 1e-6
        w = lambert_w0_exp(700.0)
        assert lambert_w0_exp(700.0 + h) == pytest.approx(w + h * w / (1 + w), rel=1e-14)
        assert lambert_w0_exp(700.0 - h) == pytest.approx(w - h * w / (1 + w), rel=1e-14)


class TestCapacity:
    def test_intermediates(self):
        cap = capacity_lower_bound(64, 1.0, 0.3, 1.0, 4, 0.95)
        a = 4 / 63 * (math.log((math.sqrt(0.95) + 3) / 0.3) + 1)
        b = 4 / (5 * 63)
        assert cap.a == pytest.approx(a, rel=1e-15)
        assert cap.b == pytest.approx(b, rel=1e-15)
        assert cap.w0 == pytest.approx(w0_oracle(math.exp(a) * b), rel=1e-12)
        assert cap.M_sparse == pytest.approx(math.sqrt(0.95) * cap.C ** (63 / 4), rel=1e-12)

    def test_monotone_in_k(self):
        vals = [capacity_lower_bound(64, 1.0, 0.3, 1.0, k, 0.95).M_sparse for k in (1, 4, 16, 64)]
        assert all(b <= a for a, b in zip(vals, vals[1:]))

    def test_growth_in_d_needs_c_above_one(self):
        low = [capacity_lower_bound(d, 1.0, 0.3, 1.0, 1, 0.95) for d in (8, 16, 32, 64)]
        assert all(c.C < 1 for c in low)
        high = [capacity_lower_bound(d, 1.0, 0.3, 20.0, 1, 0.95) for d in (8, 16, 32, 64)]
        logs = [c.log_M_sparse for c in high]
        assert all(c.C > 1 for c in high)
        assert all(b > a for a, b in zip(logs, logs[1:]))

    def test_overflow_regime(self):
        cap = capacity_lower_bound(2, 1.0, 1e-3, 1e300, 1, 1.0)
        assert cap.w0_argument_log > 700
        assert math.isfinite(cap.C)
        assert abs(cap.C * cap.w0 - cap.b) <= 1e-9 * cap.b

    @pytest.mark.parametrize("args", [
        (1, 1.0, 0.3, 1.0, 1, 0.9), (8, 0.0, 0.3, 1.0, 1, 0.9), (8, 1.0, -0.3, 1.0, 1, 0.9),
        (8, 1.0, 0.3, 0.0, 1, 0.9), (8, 1.0, 0.3, 1.0, 0, 0.9), (8, 1.0, 0.3, 1.0, 1, 0.0),
        (8, 1.0, 0.3, 1.0, 1, 1.5),
    ])
    def test_domain(self, args):
        with pytest.raises(OutOfDomain):
            capacity_lower_bound(*args)

    @given(st.integers(2, 2000), st.floats(0.05, 10), st.floats(0.01, 5), st.floats(1e-3, 1e6),
           st.integers(1, 500), st.floats(0.01, 1.0))
    def test_identity_and_sign(self, d, m, R, beta, k, p):
        cap = capacity_lower_bound(d, m, R, beta, k, p)
        assert abs(cap.C * cap.w0 - cap.b) <= 1e-9 * cap.b
        assert cap.M_sparse >= 0
        # C > 1 exactly when b > a
        if abs(cap.b - cap.a) > 1e-9 * max(cap.a, cap.b):
            assert (cap.C > 1) == (cap.b > cap.a)


class TestReport:
    def test_fields(self):
        r = bound_report(64, 1.0, 0.3, 1.0, 4, 0.95).to_dict()
        assert r["capacity_lower"] >= 0
        for key in ("a", "b", "C", "w0", "w0_argument_log", "p", "k", "m", "R", "beta"):
            assert key in r["intermediates"]
        assert r["error_bound"] is None

    def test_with_store(self):
        _, s, x, mu = admissible(5)
        r = bound_report(8, max_norm(s), radius(s), 0.5, 3, 0.9, store=s, x=x, mu=mu)
        assert r.error_bound <= r.dense_error_bound
        assert len(r.well_separated) == s.count
        cap = r.intermediates
        assert abs(cap["C"] * cap["w0"] - cap["b"]) <= 1e-9 * cap["b"]

    def test_separated_store_flags(self):
        s = separated_store()
        r = bound_report(4, 10.0, radius(s), 1.0, 5, 0.9, store=s)
        assert r.well_separated[0]
