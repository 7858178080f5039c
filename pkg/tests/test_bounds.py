"""Analytic results: recursion vs enumeration, rate cases vs root moduli,
and the overlap-excess function in both algebraic forms."""

import numpy as np
import pytest

from qtompc.bounds import (
    BoundInputs,
    HypothesisViolated,
    characteristic_roots,
    convergence_rate,
    failure_probabilities,
    h_decomposition,
    h_function,
    max_other_root_modulus,
    p_tar_lower_bound,
    success_bound,
)

from oracles import coin_failure_probability


class TestSuccessBound:
    def test_values(self):
        assert success_bound(0.0, 1.0) == 1.0
        assert success_bound(np.pi / 4, 1.0) == pytest.approx(0.5)
        assert success_bound(0.05, 1.0) == pytest.approx(np.cos(0.05) ** 2, abs=1e-15)

    def test_hypothesis_violation(self):
        with pytest.raises(HypothesisViolated):
            success_bound(np.pi / 2, 1.0)
        with pytest.raises(HypothesisViolated):
            success_bound(2.0, 1.0)


class TestFailureProbabilities:
    def test_below_horizon_is_one(self):
        inputs = BoundInputs.from_success(c=0.75, horizon=4)
        f = failure_probabilities(inputs, 3)
        np.testing.assert_array_equal(f, np.ones(3))

    def test_at_horizon(self):
        inputs = BoundInputs.from_success(c=0.75, horizon=2)
        f = failure_probabilities(inputs, 2)
        assert f[-1] == pytest.approx(1 - 0.75**2, abs=1e-12)

    def test_one_past_horizon(self):
        inputs = BoundInputs.from_success(c=0.75, horizon=2)
        f = failure_probabilities(inputs, 3)
        s = 1 - 0.75
        assert f[2] == pytest.approx(s * (f[1] + 0.75 * f[0]), abs=1e-12)
        assert f[2] == pytest.approx(0.296875, abs=1e-12)

    def test_matches_exhaustive_enumeration(self):
        for c in (0.25, 0.75):
            for L in (2, 3):
                inputs = BoundInputs.from_success(c=c, horizon=L)
                f = failure_probabilities(inputs, 10)
                for n in range(1, 11):
                    assert f[n - 1] == pytest.approx(
                        coin_failure_probability(n, L, inputs.c), abs=1e-12
                    )


class TestPTarBound:
    def test_unreachable_before_horizon(self):
        inputs = BoundInputs.from_success(c=0.9, horizon=5)
        for n in range(1, 5):
            assert p_tar_lower_bound(inputs, n) == 0.0

    def test_three_step_example(self):
        inputs = BoundInputs.from_success(c=0.75, horizon=2)
        assert p_tar_lower_bound(inputs, 3) == pytest.approx(1 - 0.296875, abs=1e-12)

    def test_limit_is_one(self):
        inputs = BoundInputs.from_success(c=0.95, horizon=4)
        assert p_tar_lower_bound(inputs, 2000) == pytest.approx(1.0, abs=1e-9)

    def test_monotone_in_n(self):
        inputs = BoundInputs.from_success(c=0.8, horizon=3)
        vals = [p_tar_lower_bound(inputs, n) for n in range(1, 60)]
        assert all(b >= a - 1e-15 for a, b in zip(vals, vals[1:]))


class TestConvergenceRate:
    def test_case3_exact(self):
        inputs = BoundInputs.from_success(c=10 / 11, horizon=10)
        case, eta = convergence_rate(inputs)
        assert case == 3
        assert eta == 10 / 11

    def test_case2(self):
        inputs = BoundInputs.from_success(c=0.9975, horizon=10)
        case, eta = convergence_rate(inputs)
        assert case == 2
        assert eta == pytest.approx(20 / 11 - 0.9975, abs=1e-12)

    def test_case1(self):
        inputs = BoundInputs.from_success(c=0.5, horizon=3)
        case, eta = convergence_rate(inputs)
        assert case == 1
        assert inputs.alpha == pytest.approx(0.0625, abs=1e-12)
        assert eta == pytest.approx(0.9375, abs=1e-12)

    def test_always_below_one(self):
        # strictly below one in exact arithmetic; 1 - alpha rounds to 1.0 in
        # float64 once alpha drops under machine epsilon
        for L in range(1, 16):
            for c in np.linspace(0.01, 0.999, 40):
                inputs = BoundInputs.from_success(c=c, horizon=L)
                _case, eta = convergence_rate(inputs)
                assert eta <= 1.0
                if inputs.alpha > 1e-12:
                    assert eta < 1.0


class TestCharacteristicRoots:
    def test_alpha_zero_degenerate(self):
        inputs = BoundInputs.from_success(c=1.0, horizon=4)
        roots = characteristic_roots(inputs)
        assert inputs.alpha == 0.0
        mods = np.sort(np.abs(roots))
        np.testing.assert_allclose(mods[:-1], 0.0, atol=1e-12)
        assert mods[-1] == pytest.approx(1.0, abs=1e-12)

    def test_c_is_a_root(self):
        for c, L in [(0.3, 4), (0.9, 7), (0.99, 12)]:
            inputs = BoundInputs.from_success(c=c, horizon=L)
            roots = characteristic_roots(inputs)
            assert np.min(np.abs(roots - inputs.c)) < 1e-9

    def test_case3_double_root(self):
        L = 6
        inputs = BoundInputs.from_success(c=L / (L + 1), horizon=L)
        c = inputs.c
        g = c ** (L + 1) - c**L + inputs.alpha
        dg = (L + 1) * c**L - L * c ** (L - 1)
        assert abs(g) < 1e-12 and abs(dg) < 1e-12
        roots = characteristic_roots(inputs)
        assert np.sort(np.abs(roots - c))[1] < 1e-6  # two roots at c

    def test_rate_bounds_root_modulus(self):
        inputs = BoundInputs.from_success(c=0.5, horizon=3)
        assert max_other_root_modulus(inputs) <= 0.9375 + 1e-9

    def test_enclosure_on_grid(self):
        for L in range(1, 16):
            for c in np.arange(0.05, 1.0, 0.05):
                inputs = BoundInputs.from_success(c=float(c), horizon=L)
                _case, eta = convergence_rate(inputs)
                assert max_other_root_modulus(inputs) <= eta + 1e-9


class TestHFunction:
    def test_parallel_is_zero(self):
        v = np.array([0.3, 0.2, 0.1])
        assert h_function(v, 0.4 * v, 1.0) == pytest.approx(0.0, abs=1e-14)

    def test_zero_control_is_zero(self):
        assert h_function(np.zeros(3), [0.02, 0.01, 0.0], 1.0) == 0.0

    def test_forms_agree(self):
        rng = np.random.default_rng(21)
        for _ in range(2000):
            v = rng.normal(size=3)
            delta = rng.normal(scale=0.3, size=3)
            ts = rng.uniform(0.01, 2.0)
            assert h_function(v, delta, ts) == pytest.approx(
                h_decomposition(v, delta, ts)["h"], abs=1e-12
            )

    def test_amplitude_and_frequency_inequalities(self):
        rng = np.random.default_rng(22)
        for _ in range(2000):
            v = rng.normal(size=3)
            delta = rng.normal(scale=0.5, size=3)
            if np.linalg.norm(np.cross(v, delta)) < 1e-9:
                continue
            dec = h_decomposition(v, delta, 0.5)
            assert 0 < dec["a1"] < 1
            assert 0 < dec["a2"] < 1
            nd = np.linalg.norm(delta)
            assert dec["f1"] < nd < dec["f2"]

    def test_quartic_small_time_expansion(self):
        rng = np.random.default_rng(23)
        checked = 0
        while checked < 300:
            v = rng.normal(size=3)
            delta = rng.normal(scale=0.4, size=3)
            cross = np.linalg.norm(np.cross(v, delta))
            if cross < 1e-3:
                continue
            # stay deep inside the expansion's validity window
            ts = 0.08 / (np.linalg.norm(v + delta) + np.linalg.norm(v))
            approx = ts**4 / 6.0 * cross**2
            val = h_function(v, delta, ts)
            assert val == pytest.approx(approx, rel=1e-2)
            checked += 1

    def test_nonnegative_under_hypothesis(self):
        rng = np.random.default_rng(24)
        for _ in range(20_000):
            v = rng.normal(scale=2.0, size=3)
            delta = rng.normal(scale=0.5, size=3)
            nd = np.linalg.norm(delta)
            ts = rng.uniform(0.0, 1.0) * (np.pi / 2) / max(nd, 1e-9)
            if ts <= 0:
                continue
            assert h_function(v, delta, ts) >= -1e-12


class TestBoundInputs:
    def test_identity_c_plus_s(self):
        inputs = BoundInputs(delta_bar=0.0707, ts=1.0, horizon=10)
        assert inputs.c + inputs.s == pytest.approx(1.0, abs=1e-14)

    def test_from_success_round_trip(self):
        inputs = BoundInputs.from_success(c=0.42, horizon=3)
        assert inputs.c == pytest.approx(0.42, abs=1e-12)

    def test_validation(self):
        with pytest.raises(ValueError):
            BoundInputs(delta_bar=-1.0, ts=1.0, horizon=2)
        with pytest.raises(ValueError):
            BoundInputs.from_success(c=0.0, horizon=2)
