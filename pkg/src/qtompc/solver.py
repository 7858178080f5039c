"""Finite-horizon OCP solver and the receding-horizon loop on the nominal model.

The stage cost is a geometrically weighted sum of trace distances to the
target with a terminal equality constraint; for weights theta > 1 its
minimizers are time-optimal (they park on the target from the minimal
step count onward), which is what the closed loop exploits.

Solver: multi-start projected gradient descent with central-difference
gradients and an augmented-Lagrangian handling of the terminal constraint
(penalty doubled each outer round).  The restart pool mixes the shifted
warm start, zeros, a one-step-lookahead greedy seed, "completion" seeds
(smooth terminal-infidelity minimization truncated at each candidate step
count, tail zeroed -- these populate the time-optimal basins the plain
descent tends to miss), and random points.  All pool members advance
together in one batched propagation.  ``solve_ocp`` is a pure function of
its arguments, which makes memoization through :class:`SolveCache` safe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import NominalModel, nominal_step
from .qubit import apply_batch, as_state, fidelity_sq, pauli_exponential_batch, trace_distance
from .records import RunRecord

__all__ = [
    "OcpSpec",
    "SolverParams",
    "OcpSolution",
    "SolverFailure",
    "SolveCache",
    "cost_jl",
    "solve_ocp",
    "shift_controls",
    "tompc_closed_loop",
]

LSTAR_UNREACHED = math.inf


@dataclass(frozen=True)
class OcpSpec:
    """Horizon, weight, control bound, and target for the stage problem."""

    model: NominalModel
    horizon: int
    theta: float
    bound: float
    target: np.ndarray

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {self.horizon}")
        if self.theta <= 1.0:
            raise ValueError(f"theta must be > 1, got {self.theta}")
        if self.bound <= 0.0:
            raise ValueError(f"bound must be > 0, got {self.bound}")
        object.__setattr__(self, "target", as_state(self.target))

    @property
    def ts(self) -> float:
        return self.model.ts

    @property
    def control_axes(self) -> tuple[str, ...]:
        return self.model.control_axes

    def cache_token(self) -> tuple:
        m = self.model
        return (
            m.r,
            m.ts,
            m.control_axes,
            self.horizon,
            self.theta,
            self.bound,
            self.target.tobytes(),
        )


@dataclass(frozen=True)
class SolverParams:
    """Solver knobs: restart count, iteration caps, penalty schedule, tolerance.

    ``restarts`` counts the random members added on top of the structured
    seeds (warm start, zeros, greedy, completions), so raising it only ever
    widens the search.
    """

    restarts: int = 2
    max_iters: int = 300
    step_init: float = 0.25
    eps_f: float = 1e-4
    penalty_init: float = 8.0
    penalty_growth: float = 2.0
    al_rounds: int = 10
    fd_step: float = 1e-6
    completion_steps: int = 6
    seed: int = 0

    def __post_init__(self):
        if self.eps_f <= 0:
            raise ValueError(f"eps_f must be > 0, got {self.eps_f}")
        if self.restarts < 0:
            raise ValueError(f"restarts must be >= 0, got {self.restarts}")

    def cache_token(self) -> tuple:
        return (
            self.restarts,
            self.max_iters,
            self.step_init,
            self.eps_f,
            self.penalty_init,
            self.penalty_growth,
            self.al_rounds,
            self.fd_step,
            self.completion_steps,
            self.seed,
        )


@dataclass(frozen=True)
class OcpSolution:
    """Controls, bare stage cost, predicted trajectory, and reach index."""

    controls: np.ndarray  # (L, 3), inactive axes zero
    cost: float
    states: np.ndarray  # (L+1, 2) predicted nominal trajectory, states[0] = s0
    lstar: int | float  # inf when no predicted state meets the tolerance
    terminal_violation: float

    @property
    def feasible(self) -> bool:
        return bool(np.isfinite(self.lstar))


class SolverFailure(RuntimeError):
    """No restart met the terminal tolerance; carries the best attempt."""

    def __init__(self, message: str, solution: OcpSolution):
        super().__init__(message)
        self.solution = solution


class SolveCache:
    """Memo table for ``solve_ocp``.

    The solver is deterministic given (spec, s0, params, warm start), so
    results can be shared freely across trials and runs.  Receding-horizon
    trajectories revisit the same states with the same warm starts almost
    every step, which makes this the difference between minutes and hours
    for the Monte Carlo sweeps.
    """

    def __init__(self):
        self._store: dict = {}
        self.hits = 0
        self.misses = 0

    def lookup(self, key):
        sol = self._store.get(key)
        if sol is not None:
            self.hits += 1
        return sol

    def insert(self, key, solution: OcpSolution):
        self.misses += 1
        self._store[key] = solution

    def __len__(self) -> int:
        return len(self._store)


def _expand_controls(spec: OcpSpec, u_active: np.ndarray) -> np.ndarray:
    """(..., L, A) active-axis values -> (..., L, 3) full control vectors."""
    full = np.zeros(u_active.shape[:-1] + (3,))
    for j, idx in enumerate(spec.model.axis_indices):
        full[..., idx] = u_active[..., j]
    return full


def _batch_distances(spec: OcpSpec, s0: np.ndarray, u_active: np.ndarray) -> np.ndarray:
    """Trace distances to the target along each trajectory.

    ``u_active``: (B, L, A).  Returns (B, L+1) distances with column 0 the
    (constant) distance of ``s0`` itself.
    """
    batch = u_active.shape[0]
    L = spec.horizon
    w = _expand_controls(spec, u_active)
    w[..., 2] += spec.model.r
    props = pauli_exponential_batch(w.reshape(batch * L, 3), spec.ts).reshape(batch, L, 2, 2)
    psi = np.broadcast_to(s0, (batch, 2)).copy()
    tgt = spec.target.conj()
    dists = np.empty((batch, L + 1))
    ov = psi @ tgt
    dists[:, 0] = np.sqrt(np.maximum(1.0 - (ov.real**2 + ov.imag**2), 0.0))
    for l in range(L):
        psi = apply_batch(props[:, l], psi)
        ov = psi @ tgt
        dists[:, l + 1] = np.sqrt(np.maximum(1.0 - (ov.real**2 + ov.imag**2), 0.0))
    return dists


def _stage_weights(spec: OcpSpec) -> np.ndarray:
    return spec.theta ** np.arange(spec.horizon)


def cost_jl(spec: OcpSpec, s0, controls) -> float:
    """Geometrically weighted deviation of the predicted trajectory.

    ``sum_{l=0}^{L-1} theta^l * dist(psi_l, target)`` with ``psi_0 = s0``
    and the nominal recursion.  Bounded above by (theta^L - 1)/(theta - 1).
    """
    s0 = as_state(s0)
    controls = _validate_controls(spec, controls)
    u_active = controls[:, list(spec.model.axis_indices)][None]
    dists = _batch_distances(spec, s0, u_active)
    return float(dists[0, : spec.horizon] @ _stage_weights(spec))


def _validate_controls(spec: OcpSpec, controls) -> np.ndarray:
    controls = np.asarray(controls, dtype=np.float64)
    if controls.shape != (spec.horizon, 3):
        raise ValueError(
            f"controls must have shape ({spec.horizon}, 3), got {controls.shape}"
        )
    active = spec.model.axis_indices
    for i in range(3):
        col = controls[:, i]
        if i not in active:
            if np.any(col != 0.0):
                raise ValueError(f"nonzero control on inactive axis {'xyz'[i]!r}")
        elif np.any(np.abs(col) > spec.bound + 1e-12):
            raise ValueError(f"control exceeds bound {spec.bound} on axis {'xyz'[i]!r}")
    return controls


def _pgd_engine(eval_fn, u, bound, params, max_iters, step_init, mask=None):
    """Batched projected gradient descent with per-row backtracking.

    ``eval_fn(u3d, rows)`` evaluates the objective for a stacked batch whose
    row ``i`` originated from pool row ``rows[i]`` (so per-row multipliers
    can be applied).  ``mask`` freezes variables where it is 0; it may be
    shared, shape (L, A), or per row, shape (R, L, A).

    Rows drop out of the working set once their step size collapses or
    their objective stops improving; only the remaining rows pay for
    gradients and line searches.
    """
    R, L, A = u.shape
    nvar = L * A
    fd = params.fd_step
    flat_mask = None if mask is None else np.broadcast_to(mask.reshape(-1, nvar), (R, nvar))
    step = np.full(R, step_init)
    phi = eval_fn(u, np.arange(R))
    active = np.ones(R, dtype=bool)
    check_every = 12
    phi_mark = phi.copy()
    idx_var = np.arange(nvar)
    for it in range(max_iters):
        act = np.nonzero(active)[0]
        if act.size == 0:
            break
        Ra = act.size
        flat = u[act].reshape(Ra, nvar)
        pert = np.repeat(flat[:, None, :], 2 * nvar, axis=1)
        pert[:, 2 * idx_var, idx_var] += fd
        pert[:, 2 * idx_var + 1, idx_var] -= fd
        phi_pert = eval_fn(
            pert.reshape(Ra * 2 * nvar, L, A), np.repeat(act, 2 * nvar)
        ).reshape(Ra, 2 * nvar)
        grad = (phi_pert[:, 0::2] - phi_pert[:, 1::2]) / (2.0 * fd)
        if flat_mask is not None:
            grad *= flat_mask[act]

        accepted = np.zeros(Ra, dtype=bool)
        trial = step[act].copy()
        phi_a = phi[act].copy()
        for _bt in range(40):
            pend = np.nonzero(~accepted)[0]
            if pend.size == 0:
                break
            cand = np.clip(flat[pend] - trial[pend, None] * grad[pend], -bound, bound)
            phi_new = eval_fn(cand.reshape(pend.size, L, A), act[pend])
            move = np.sqrt(np.einsum("ij,ij->i", cand - flat[pend], cand - flat[pend]))
            ok = (phi_a[pend] - phi_new >= 1e-4 * move**2 / np.maximum(trial[pend], 1e-300)) & (
                move > 0
            )
            hit = pend[ok]
            if hit.size:
                flat[hit] = cand[ok]
                phi_a[hit] = phi_new[ok]
                accepted[hit] = True
                trial[hit] = np.minimum(trial[hit] * 2.0, 1e2)
            miss = pend[~ok]
            trial[miss] *= 0.5
        u[act] = flat.reshape(Ra, L, A)
        phi[act] = phi_a
        step[act] = trial
        dead = act[(~accepted) & (trial < 1e-13)]
        active[dead] = False
        if (it + 1) % check_every == 0:
            # retire rows whose objective is no longer moving
            stale = active & (phi_mark - phi <= 1e-12 * (1.0 + np.abs(phi)))
            active &= ~stale
            phi_mark = phi.copy()
    return u


def _stage_eval(spec, s0, lam, mu):
    """Objective closure for the augmented stage problem."""
    weights = _stage_weights(spec)
    L = spec.horizon

    def eval_fn(u3d, rows):
        dists = _batch_distances(spec, s0, u3d)
        cost = dists[:, :L] @ weights
        viol = dists[:, L]
        return cost + lam[rows] * viol + 0.5 * mu * viol**2

    return eval_fn


def _cost_and_violation(spec, s0, u):
    dists = _batch_distances(spec, s0, u)
    return dists[:, : spec.horizon] @ _stage_weights(spec), dists[:, spec.horizon]


def _greedy_init(spec: OcpSpec, s0: np.ndarray) -> np.ndarray:
    """Per-step one-step-lookahead seed over a coarse control grid."""
    n_axes = len(spec.model.axis_indices)
    levels = np.linspace(-spec.bound, spec.bound, 9)
    grids = np.meshgrid(*([levels] * n_axes), indexing="ij")
    candidates = np.stack([g.ravel() for g in grids], axis=-1)
    n_cand = candidates.shape[0]
    w_cand = _expand_controls(spec, candidates)
    w_cand[..., 2] += spec.model.r
    props = pauli_exponential_batch(w_cand, spec.ts)
    out = np.zeros((spec.horizon, n_axes))
    psi = s0.copy()
    for l in range(spec.horizon):
        nxt = apply_batch(props, np.broadcast_to(psi, (n_cand, 2)))
        fid = np.abs(nxt @ spec.target.conj()) ** 2
        best = int(np.argmax(fid))
        out[l] = candidates[best]
        psi = nxt[best]
    return out


def _completion_seeds(spec, s0, params, greedy):
    """Minimal-time structured seeds.

    For each candidate reach count m, minimize the smooth terminal
    infidelity of the m-step truncation (tail frozen at zero); a seed that
    actually completes puts the subsequent descent in the basin where the
    trajectory parks on the target from step m onward.
    """
    n_axes = len(spec.model.axis_indices)
    L = spec.horizon
    counts = sorted(set(list(range(1, min(L, params.completion_steps) + 1)) + [L]))
    R = len(counts)
    u = np.zeros((R, L, n_axes))
    masks = np.zeros((R, L, n_axes))
    for i, m in enumerate(counts):
        u[i, :m] = greedy[:m]
        masks[i, :m] = 1.0
    m_arr = np.array(counts)

    def eval_fn(u3d, rows):
        dists = _batch_distances(spec, s0, u3d)
        return dists[np.arange(len(rows)), m_arr[rows]] ** 2

    return _pgd_engine(
        eval_fn,
        u,
        spec.bound,
        params,
        max_iters=120,
        step_init=params.step_init,
        mask=masks,
    )


def _initial_pool(spec, s0, params, warm_active):
    n_axes = len(spec.model.axis_indices)
    L = spec.horizon
    greedy = _greedy_init(spec, s0)
    seeds = [np.zeros((L, n_axes)), greedy]
    if warm_active is not None:
        seeds.insert(0, warm_active)
    seeds.extend(_completion_seeds(spec, s0, params, greedy))
    for r in range(params.restarts):
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=params.seed, spawn_key=(r,))
        )
        seeds.append(rng.uniform(-spec.bound, spec.bound, size=(L, n_axes)))
    return np.clip(np.stack(seeds), -spec.bound, spec.bound)


def solve_ocp(
    spec: OcpSpec,
    s0,
    params: SolverParams,
    warm_start: np.ndarray | None = None,
    cache: SolveCache | None = None,
) -> OcpSolution:
    """Solve the stage problem from ``s0``.

    Returns the best feasible pool member (terminal violation <= ``eps_f``),
    ties within 1e-9 broken by control energy.  Raises
    :class:`SolverFailure` carrying the best attempt when nothing meets the
    tolerance; callers may raise the horizon and retry.
    """
    s0 = as_state(s0)
    warm_bytes = b""
    warm_active = None
    if warm_start is not None:
        warm_start = _validate_controls(spec, warm_start)
        warm_active = warm_start[:, list(spec.model.axis_indices)]
        warm_bytes = warm_start.tobytes()
    key = None
    if cache is not None:
        key = (spec.cache_token(), params.cache_token(), s0.tobytes(), warm_bytes)
        hit = cache.lookup(key)
        if hit is not None:
            return hit

    solution = _solve_fast_path(spec, s0, params, warm_active)
    if solution is None:
        solution = _solve_full(spec, s0, params, warm_active)
    if cache is not None:
        cache.insert(key, solution)
    return solution


def _solve_fast_path(spec, s0, params, warm_active):
    """Accept a warm start that already parks the whole horizon on the target.

    This is the steady-state case of the receding-horizon loop (the shifted
    previous solution is optimal there); anything else falls through to the
    full multi-start solve.
    """
    if warm_active is None:
        return None
    if trace_distance(s0, spec.target) > params.eps_f:
        return None
    lam = np.zeros(1)
    u = _pgd_engine(
        _stage_eval(spec, s0, lam, params.penalty_init),
        warm_active[None].copy(),
        spec.bound,
        params,
        max_iters=100,
        step_init=params.step_init,
    )
    dists = _batch_distances(spec, s0, u)[0]
    if np.all(dists <= params.eps_f):
        return _finalize(spec, s0, u[0], params)
    return None


def _solve_full(spec, s0, params, warm_active):
    u = _initial_pool(spec, s0, params, warm_active)
    R = u.shape[0]
    lam = np.zeros(R)
    mu = params.penalty_init
    for round_idx in range(params.al_rounds):
        iters = params.max_iters if round_idx == 0 else max(params.max_iters // 2, 60)
        u = _pgd_engine(
            _stage_eval(spec, s0, lam, mu),
            u,
            spec.bound,
            params,
            max_iters=iters,
            step_init=params.step_init,
        )
        cost, viol = _cost_and_violation(spec, s0, u)
        if np.all(viol <= params.eps_f):
            break
        lam = lam + mu * viol
        mu *= params.penalty_growth

    cost, viol = _cost_and_violation(spec, s0, u)
    feasible = viol <= params.eps_f
    if feasible.any():
        cand = np.where(feasible, cost, np.inf)
        best_cost = cand.min()
        energy = np.sum(u**2, axis=(1, 2))
        near = feasible & (cost <= best_cost + 1e-9)
        best = int(np.argmin(np.where(near, energy, np.inf)))
    else:
        best = int(np.argmin(viol))

    # intensify the winner alone; keep the result only if it stays feasible
    u_best = _pgd_engine(
        _stage_eval(spec, s0, lam[best : best + 1], mu),
        u[best : best + 1].copy(),
        spec.bound,
        params,
        max_iters=200,
        step_init=params.step_init,
    )
    new_cost, new_viol = _cost_and_violation(spec, s0, u_best)
    if new_viol[0] <= params.eps_f and new_cost[0] <= cost[best] + 1e-12:
        chosen = u_best[0]
    else:
        chosen = u[best]

    solution = _finalize(spec, s0, chosen, params)
    if not feasible.any() and solution.terminal_violation > params.eps_f:
        raise SolverFailure(
            f"terminal violation {solution.terminal_violation:.3e} exceeds "
            f"eps_f={params.eps_f} after {params.al_rounds} penalty rounds",
            solution,
        )
    return solution


def _finalize(spec, s0, u_active, params) -> OcpSolution:
    controls = _expand_controls(spec, np.clip(u_active, -spec.bound, spec.bound))
    states = np.empty((spec.horizon + 1, 2), dtype=np.complex128)
    states[0] = s0
    psi = s0
    for l in range(spec.horizon):
        psi = nominal_step(spec.model, controls[l], psi)
        states[l + 1] = psi
    dists = np.array([trace_distance(states[l], spec.target) for l in range(spec.horizon + 1)])
    cost = float(dists[: spec.horizon] @ _stage_weights(spec))
    reached = np.nonzero(dists <= params.eps_f)[0]
    lstar = int(reached[0]) if reached.size else LSTAR_UNREACHED
    return OcpSolution(
        controls=controls,
        cost=cost,
        states=states,
        lstar=lstar,
        terminal_violation=float(dists[-1]),
    )


def shift_controls(controls: np.ndarray) -> np.ndarray:
    """Receding-horizon warm start: drop the applied step, append zeros."""
    return np.vstack([controls[1:], np.zeros((1, 3))])


def tompc_closed_loop(
    spec: OcpSpec,
    s0,
    params: SolverParams,
    n_steps: int,
    cache: SolveCache | None = None,
) -> RunRecord:
    """Receding-horizon control of the nominal system (no uncertainty, no
    measurement): solve, apply the first control, feed the nominal next
    state back, repeat."""
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    psi = as_state(s0)
    model = spec.model
    controls = np.zeros((n_steps, 3))
    predictions = np.empty((n_steps, 2), dtype=np.complex128)
    fid = np.zeros(n_steps)
    lstars = np.zeros(n_steps)
    warm = None
    for k in range(n_steps):
        sol = solve_ocp(spec, psi, params, warm_start=warm, cache=cache)
        u0 = sol.controls[0]
        psi = nominal_step(model, u0, psi)
        controls[k] = u0
        predictions[k] = psi
        fid[k] = fidelity_sq(psi, spec.target)
        lstars[k] = sol.lstar
        warm = shift_controls(sol.controls)
    zeros = np.zeros(n_steps)
    return RunRecord(
        algorithm="tompc",
        ts=model.ts,
        target=spec.target,
        controls=controls,
        predictions=predictions,
        plant_states=predictions.copy(),
        post_states=predictions.copy(),
        p_success=np.ones(n_steps),
        outcomes=np.full(n_steps, -1, dtype=np.int8),
        fid_target=fid,
        etrack_cum=zeros,
        deltas=np.zeros((n_steps, 3)),
        lstars=lstars,
    )
