"""Robust qubit state transfer via time-optimal MPC with measurement feedback."""

from .bounds import (
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
from .dynamics import (
    NominalModel,
    UncertaintyModel,
    nominal_step,
    realize_for_trial,
    sample_uncertainty,
    uncertain_step,
)
from .loop import (
    DegenerateMeasurement,
    MeasurementOutcome,
    povm_measure,
    qmpc_run,
)
from .qubit import (
    KET0,
    KET1,
    NumericError,
    bloch_to_state,
    canonicalize_phase,
    fidelity_sq,
    pauli_exponential,
    state_to_bloch,
    trace_distance,
)
from .qubit import apply as apply_propagator
from .records import RunRecord, e_track, infidelity, replay_open_loop
from .solver import (
    OcpSolution,
    OcpSpec,
    SolveCache,
    SolverFailure,
    SolverParams,
    cost_jl,
    shift_controls,
    solve_ocp,
    tompc_closed_loop,
)

__version__ = "0.1.0"
