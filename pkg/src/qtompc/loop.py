"""The measured closed loop: plan, apply, project, feed back.

Each step solves the stage problem on the nominal model, applies the first
control to the uncertain plant, and measures the plant against the
one-step nominal prediction with the binary projective POVM
``{|ref><ref|, I - |ref><ref|}``.  The post-measurement state (the
prediction itself on success, its orthogonal complement on failure) seeds
the next solve.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .dynamics import NominalModel, UncertaintyModel, realize_for_trial, sample_uncertainty, uncertain_step
from .qubit import as_state, canonicalize_phase, fidelity_sq, trace_distance
from .records import RunRecord, e_track, infidelity
from .solver import OcpSpec, SolveCache, SolverFailure, SolverParams, shift_controls, solve_ocp

__all__ = [
    "MeasurementOutcome",
    "DegenerateMeasurement",
    "povm_measure",
    "qmpc_run",
    "e_track",
    "infidelity",
]

DEGENERATE_P = 1.0 - 1e-12


class DegenerateMeasurement(RuntimeError):
    """Failure branch sampled while its probability is below 1e-12.

    The orthogonal post-state would be the normalization of a near-zero
    vector; the closed loop treats this as a forced success.
    """


@dataclass(frozen=True)
class MeasurementOutcome:
    success: bool
    probability: float
    post_state: np.ndarray


def povm_measure(reference, plant, rng: np.random.Generator) -> MeasurementOutcome:
    """Sample the binary projective measurement of ``plant`` against ``reference``.

    Success has Born probability ``|<reference|plant>|^2`` and collapses
    onto ``reference``; failure collapses onto the orthogonal complement
    (one-dimensional for a qubit), returned in canonical phase.
    """
    reference = as_state(reference)
    plant = as_state(plant)
    p = fidelity_sq(reference, plant)
    success = bool(rng.random() < p)
    if success:
        return MeasurementOutcome(True, p, reference.copy())
    if p > DEGENERATE_P:
        raise DegenerateMeasurement(
            f"failure branch drawn with success probability {p!r}"
        )
    residual = plant - np.vdot(reference, plant) * reference
    residual = residual / np.linalg.norm(residual)
    return MeasurementOutcome(False, p, canonicalize_phase(as_state(residual)))


def qmpc_run(
    spec: OcpSpec,
    model: NominalModel,
    unc: UncertaintyModel,
    s0,
    params: SolverParams,
    n_steps: int,
    rng: np.random.Generator,
    cache: SolveCache | None = None,
    seed: int | None = None,
) -> RunRecord:
    """Run the full measured closed loop for ``n_steps`` steps.

    A solver failure mid-run re-raises with the partial record attached as
    ``exc.partial_record``.  With ``unc.kind == "none"`` the measurement
    succeeds with probability one and the trajectory coincides with the
    nominal receding-horizon loop.
    """
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    if model != spec.model:
        raise ValueError("plant model differs from the model in the OCP spec")
    norm_bound = unc.norm_bound
    if norm_bound > 0 and model.ts >= np.pi / (2.0 * norm_bound):
        warnings.warn(
            f"ts={model.ts} violates ts < pi/(2*{norm_bound:.4g}); "
            "the per-step success floor no longer applies",
            RuntimeWarning,
            stacklevel=2,
        )
    psi = as_state(s0)
    realized = realize_for_trial(unc, rng)

    controls = np.zeros((n_steps, 3))
    predictions = np.empty((n_steps, 2), dtype=np.complex128)
    plant_states = np.empty((n_steps, 2), dtype=np.complex128)
    post_states = np.empty((n_steps, 2), dtype=np.complex128)
    p_success = np.zeros(n_steps)
    outcomes = np.zeros(n_steps, dtype=np.int8)
    fid = np.zeros(n_steps)
    cum = np.zeros(n_steps)
    deltas = np.zeros((n_steps, 3))
    lstars = np.zeros(n_steps)

    running = 0.0
    warm = None
    for k in range(n_steps):
        try:
            sol = solve_ocp(spec, psi, params, warm_start=warm, cache=cache)
        except SolverFailure as exc:
            exc.partial_record = _partial(
                k, spec, model, controls, predictions, plant_states, post_states,
                p_success, outcomes, fid, cum, deltas, lstars, seed,
            )
            raise
        u0 = sol.controls[0]
        from .dynamics import nominal_step

        pred = nominal_step(model, u0, psi)
        delta = sample_uncertainty(realized, k, rng)
        plant = uncertain_step(model, u0, delta, psi)
        try:
            outcome = povm_measure(pred, plant, rng)
        except DegenerateMeasurement:
            outcome = MeasurementOutcome(True, fidelity_sq(pred, plant), pred.copy())
        psi = outcome.post_state
        running += trace_distance(pred, psi) ** 2

        controls[k] = u0
        predictions[k] = pred
        plant_states[k] = plant
        post_states[k] = psi
        p_success[k] = outcome.probability
        outcomes[k] = 1 if outcome.success else 0
        fid[k] = fidelity_sq(psi, spec.target)
        cum[k] = running
        deltas[k] = delta
        lstars[k] = sol.lstar
        warm = shift_controls(sol.controls)

    return RunRecord(
        algorithm="qtompc",
        ts=model.ts,
        target=spec.target,
        controls=controls,
        predictions=predictions,
        plant_states=plant_states,
        post_states=post_states,
        p_success=p_success,
        outcomes=outcomes,
        fid_target=fid,
        etrack_cum=cum,
        deltas=deltas,
        lstars=lstars,
        seed=seed,
    )


def _partial(k, spec, model, controls, predictions, plant_states, post_states,
             p_success, outcomes, fid, cum, deltas, lstars, seed) -> RunRecord:
    sl = slice(0, k)
    return RunRecord(
        algorithm="qtompc",
        ts=model.ts,
        target=spec.target,
        controls=controls[sl],
        predictions=predictions[sl],
        plant_states=plant_states[sl],
        post_states=post_states[sl],
        p_success=p_success[sl],
        outcomes=outcomes[sl],
        fid_target=fid[sl],
        etrack_cum=cum[sl],
        deltas=deltas[sl],
        lstars=lstars[sl],
        seed=seed,
        meta={"partial": True},
    )
