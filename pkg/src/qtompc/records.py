"""Per-run logs and the metrics computed from them.

A :class:`RunRecord` is a write-once bundle of per-step arrays shared by
all three strategies.  For the measured closed loop the reference state at
step k is the one-step nominal prediction from the current (post-
measurement) state; for open-loop replays it is the precomputed nominal
trajectory, and the "post" state is simply the uncertain plant state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import NominalModel, UncertaintyModel, realize_for_trial, sample_uncertainty, uncertain_step
from .qubit import as_state, fidelity_sq, trace_distance

__all__ = ["RunRecord", "e_track", "infidelity", "replay_open_loop"]


@dataclass(frozen=True)
class RunRecord:
    """Step-indexed log of one closed- or open-loop run."""

    algorithm: str
    ts: float
    target: np.ndarray
    controls: np.ndarray  # (N, 3) applied control per step
    predictions: np.ndarray  # (N, 2) nominal reference state after each step
    plant_states: np.ndarray  # (N, 2) uncertain-plant state after each step
    post_states: np.ndarray  # (N, 2) state fed forward (post-measurement/plant)
    p_success: np.ndarray  # (N,) Born probability of the success branch
    outcomes: np.ndarray  # (N,) int8: 1 success, 0 failure, -1 unmeasured
    fid_target: np.ndarray  # (N,) fidelity of the fed-forward state to target
    etrack_cum: np.ndarray  # (N,) running sum of squared prediction deviations
    deltas: np.ndarray  # (N, 3) sampled uncertainty vectors
    lstars: np.ndarray  # (N,) per-solve minimal step count (-1 for open loop)
    seed: int | None = None
    config_key: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.controls)
        for name in (
            "predictions",
            "plant_states",
            "post_states",
            "p_success",
            "outcomes",
            "fid_target",
            "etrack_cum",
            "deltas",
            "lstars",
        ):
            if len(getattr(self, name)) != n:
                raise ValueError(f"field {name!r} length mismatch: expected {n}")
        if np.any(np.diff(self.etrack_cum) < -1e-15):
            raise ValueError("cumulative tracking error must be non-decreasing")

    @property
    def n_steps(self) -> int:
        return len(self.controls)


def e_track(record: RunRecord) -> float:
    """Accumulated squared trace distance between the nominal reference and
    the realized (post-measurement or plant) state."""
    if record.n_steps == 0:
        return 0.0
    return float(record.etrack_cum[-1])


def infidelity(record: RunRecord) -> float:
    """``1 - |<target|final fed-forward state>|^2``."""
    if record.n_steps == 0:
        raise ValueError("record is empty")
    return float(1.0 - fidelity_sq(record.post_states[-1], record.target))


def replay_open_loop(
    controls: np.ndarray,
    nominal_states: np.ndarray,
    model: NominalModel,
    unc: UncertaintyModel,
    s0,
    target,
    rng: np.random.Generator,
    algorithm: str = "replay",
    seed: int | None = None,
) -> RunRecord:
    """Apply a fixed control sequence to the uncertain plant, no measurement.

    ``nominal_states`` is the precomputed nominal trajectory (one state per
    step, aligned with ``controls``); tracking error accumulates against it.
    """
    controls = np.asarray(controls, dtype=np.float64)
    n = len(controls)
    if len(nominal_states) != n:
        raise ValueError("nominal_states must align with controls")
    psi = as_state(s0)
    target = as_state(target)
    realized = realize_for_trial(unc, rng)
    plant = np.empty((n, 2), dtype=np.complex128)
    deltas = np.zeros((n, 3))
    p_success = np.zeros(n)
    fid = np.zeros(n)
    cum = np.zeros(n)
    running = 0.0
    for k in range(n):
        deltas[k] = sample_uncertainty(realized, k, rng)
        psi = uncertain_step(model, controls[k], deltas[k], psi)
        plant[k] = psi
        p_success[k] = fidelity_sq(nominal_states[k], psi)
        fid[k] = fidelity_sq(psi, target)
        running += trace_distance(nominal_states[k], psi) ** 2
        cum[k] = running
    return RunRecord(
        algorithm=algorithm,
        ts=model.ts,
        target=target,
        controls=controls.copy(),
        predictions=np.asarray(nominal_states, dtype=np.complex128).copy(),
        plant_states=plant,
        post_states=plant.copy(),
        p_success=p_success,
        outcomes=np.full(n, -1, dtype=np.int8),
        fid_target=fid,
        etrack_cum=cum,
        deltas=deltas,
        lstars=np.full(n, -1.0),
        seed=seed,
    )
