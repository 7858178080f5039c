"""Stage-problem solver: cost function, feasibility, time-optimal structure,
and the nominal receding-horizon loop."""

import numpy as np
import pytest

from qtompc.dynamics import NominalModel, nominal_step
from qtompc.qubit import KET0, KET1, fidelity_sq, trace_distance
from qtompc.solver import (
    OcpSpec,
    SolveCache,
    SolverParams,
    cost_jl,
    shift_controls,
    solve_ocp,
    tompc_closed_loop,
)

MODEL = NominalModel(r=0.05, control_axes=("x", "y"), ts=1.0)
SPEC = OcpSpec(model=MODEL, horizon=10, theta=1.9, bound=0.5, target=KET1)
PARAMS = SolverParams(seed=0)


@pytest.fixture(scope="module")
def main_solution():
    return solve_ocp(SPEC, KET0, PARAMS)


class TestCostJl:
    def test_fixed_point_costs_nothing(self):
        assert cost_jl(SPEC, KET1, np.zeros((10, 3))) == pytest.approx(0.0, abs=1e-12)

    def test_zero_controls_from_ket0(self):
        # the drift never moves |0> toward |1>, every stage distance is 1
        expected = (1.9**10 - 1) / (1.9 - 1)
        assert cost_jl(SPEC, KET0, np.zeros((10, 3))) == pytest.approx(expected, rel=1e-12)

    def test_uniform_upper_bound(self):
        rng = np.random.default_rng(31)
        cap = (1.9**10 - 1) / (1.9 - 1)
        for _ in range(50):
            u = np.zeros((10, 3))
            u[:, :2] = rng.uniform(-0.5, 0.5, size=(10, 2))
            psi = rng.normal(size=2) + 1j * rng.normal(size=2)
            psi /= np.linalg.norm(psi)
            assert cost_jl(SPEC, psi, u) <= cap + 1e-12

    def test_rejects_out_of_bound_controls(self):
        u = np.zeros((10, 3))
        u[0, 0] = 0.6
        with pytest.raises(ValueError):
            cost_jl(SPEC, KET0, u)

    def test_rejects_inactive_axis(self):
        u = np.zeros((10, 3))
        u[0, 2] = 0.1
        with pytest.raises(ValueError):
            cost_jl(SPEC, KET0, u)


class TestSolveOcp:
    def test_from_target_is_trivial(self):
        sol = solve_ocp(SPEC, KET1, PARAMS)
        assert sol.lstar == 0
        assert sol.cost == pytest.approx(0.0, abs=1e-8)
        assert sol.terminal_violation <= PARAMS.eps_f

    def test_transfer_reaches_in_three_steps(self, main_solution):
        sol = main_solution
        assert sol.lstar == 3
        assert sol.terminal_violation <= PARAMS.eps_f

    def test_holds_target_after_reaching(self, main_solution):
        sol = main_solution
        for l in range(int(sol.lstar), 11):
            assert trace_distance(sol.states[l], KET1) <= PARAMS.eps_f

    def test_controls_feasible(self, main_solution):
        u = main_solution.controls
        assert np.all(np.abs(u[:, :2]) <= 0.5 + 1e-12)
        np.testing.assert_array_equal(u[:, 2], 0.0)

    def test_predicted_trajectory_consistent(self, main_solution):
        sol = main_solution
        psi = KET0
        for l in range(10):
            psi = nominal_step(MODEL, sol.controls[l], psi)
            assert fidelity_sq(psi, sol.states[l + 1]) == pytest.approx(1.0, abs=1e-12)

    def test_cost_reported_matches_trajectory(self, main_solution):
        # near the kink sqrt(1-F) amplifies last-bit differences between the
        # batched and sequential propagation paths, so agreement is ~1e-6
        sol = main_solution
        assert sol.cost == pytest.approx(cost_jl(SPEC, KET0, sol.controls), abs=1e-6)

    @pytest.mark.parametrize("theta", [1.5, 1.9, 3.0])
    def test_theta_sweep_holds_target(self, theta):
        spec = OcpSpec(model=MODEL, horizon=10, theta=theta, bound=0.5, target=KET1)
        sol = solve_ocp(spec, KET0, PARAMS)
        assert np.isfinite(sol.lstar)
        dists = [trace_distance(sol.states[l], KET1) for l in range(11)]
        for l in range(int(sol.lstar), 11):
            assert dists[l] <= PARAMS.eps_f

    def test_restart_monotonicity(self):
        costs = []
        for restarts in (0, 2, 4):
            params = SolverParams(restarts=restarts, seed=0)
            costs.append(solve_ocp(SPEC, KET0, params).cost)
        assert costs[1] <= costs[0] + 1e-9
        assert costs[2] <= costs[1] + 1e-9

    def test_deterministic(self):
        a = solve_ocp(SPEC, KET0, PARAMS)
        b = solve_ocp(SPEC, KET0, PARAMS)
        np.testing.assert_array_equal(a.controls, b.controls)
        assert a.cost == b.cost

    def test_cache_round_trip(self):
        cache = SolveCache()
        a = solve_ocp(SPEC, KET0, PARAMS, cache=cache)
        assert cache.misses == 1
        b = solve_ocp(SPEC, KET0, PARAMS, cache=cache)
        assert cache.hits == 1
        np.testing.assert_array_equal(a.controls, b.controls)

    def test_shift_relation_after_success(self, main_solution):
        # from the one-step-ahead state the optimum is the shifted solution:
        # its cost obeys J(next) = (J(cur) - d0) / theta
        sol = main_solution
        warm = shift_controls(sol.controls)
        nxt = solve_ocp(SPEC, sol.states[1], PARAMS, warm_start=warm)
        expected = (sol.cost - trace_distance(KET0, KET1)) / 1.9
        assert nxt.cost == pytest.approx(expected, abs=1e-6)
        assert nxt.lstar == 2


class TestSolverParams:
    def test_validation(self):
        with pytest.raises(ValueError):
            SolverParams(eps_f=0.0)
        with pytest.raises(ValueError):
            SolverParams(restarts=-1)

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            OcpSpec(model=MODEL, horizon=0, theta=1.9, bound=0.5, target=KET1)
        with pytest.raises(ValueError):
            OcpSpec(model=MODEL, horizon=10, theta=1.0, bound=0.5, target=KET1)
        with pytest.raises(ValueError):
            OcpSpec(model=MODEL, horizon=10, theta=1.9, bound=0.0, target=KET1)


class TestClosedLoopNominal:
    def test_stays_at_target(self):
        rec = tompc_closed_loop(SPEC, KET1, PARAMS, 8)
        np.testing.assert_allclose(rec.fid_target, 1.0, atol=1e-8)
        assert rec.etrack_cum[-1] == 0.0

    def test_reaches_and_stays(self):
        cache = SolveCache()
        rec = tompc_closed_loop(SPEC, KET0, PARAMS, 20, cache=cache)
        reach = np.nonzero(rec.fid_target >= 1 - 1e-4)[0][0]
        assert reach <= 3
        assert np.all(rec.fid_target[reach:] >= 1 - 1e-4)

    def test_distance_non_increasing_after_reach(self):
        rec = tompc_closed_loop(SPEC, KET0, PARAMS, 20)
        dists = np.sqrt(np.maximum(1.0 - rec.fid_target, 0.0))
        reach = np.nonzero(dists <= 1e-4)[0][0]
        tail = dists[reach:]
        assert np.all(np.diff(tail) <= 1e-9)

    def test_lstar_counts_down(self):
        rec = tompc_closed_loop(SPEC, KET0, PARAMS, 6)
        assert list(rec.lstars[:4]) == [3, 2, 1, 0]
