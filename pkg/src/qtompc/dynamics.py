"""Discrete-time qubit evolution with and without bounded uncertainties.

The drift Hamiltonian is ``r * sigma_z``; piecewise-constant controls act
on a configurable subset of Pauli axes.  One step of duration ``ts``
evolves the state by ``exp(-i ts (u + (0,0,r) + delta) . sigma)``, with
``delta`` the uncertainty vector held constant over the step.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .qubit import apply, as_state, pauli_exponential

__all__ = [
    "AXIS_INDEX",
    "NominalModel",
    "UncertaintyModel",
    "coefficient_vector",
    "nominal_step",
    "uncertain_step",
    "sample_uncertainty",
    "realize_for_trial",
]

AXIS_INDEX = {"x": 0, "y": 1, "z": 2}

# Periodic-disturbance frequency range, rad/ns (15pi..25pi rad/us).
PERIODIC_FREQ_LOW = 0.015 * np.pi
PERIODIC_FREQ_HIGH = 0.025 * np.pi

UNCERTAINTY_KINDS = ("none", "periodic", "uniform", "gaussian")


@dataclass(frozen=True)
class NominalModel:
    """Drift coefficient, actuated axes, and sampling period."""

    r: float = 0.05
    control_axes: tuple[str, ...] = ("x", "y")
    ts: float = 1.0

    def __post_init__(self):
        if self.ts <= 0:
            raise ValueError(f"ts must be positive, got {self.ts}")
        if not self.control_axes:
            raise ValueError("control_axes must be nonempty")
        for axis in self.control_axes:
            if axis not in AXIS_INDEX:
                raise ValueError(f"unknown control axis {axis!r}")
        if len(set(self.control_axes)) != len(self.control_axes):
            raise ValueError("control_axes contains duplicates")
        if not np.isfinite(self.r):
            raise ValueError("drift coefficient r must be finite")

    @property
    def axis_indices(self) -> tuple[int, ...]:
        return tuple(AXIS_INDEX[a] for a in self.control_axes)

    @property
    def drift(self) -> np.ndarray:
        return np.array([0.0, 0.0, self.r])


@dataclass(frozen=True)
class UncertaintyModel:
    """One of the disturbance generators acting on the x and y axes.

    ``bound`` is the componentwise amplitude limit (rad/ns).  The norm
    bound used by the analytic results is ``bound * sqrt(2)`` for these
    two-component generators (see :meth:`norm_bound`).

    * ``periodic``: ``dx = bound*cos(omega_x k ts + phi_x)``,
      ``dy = bound*sin(omega_y k ts + phi_y)``.  Frequencies/phases left as
      ``None`` are drawn once per trial by :func:`realize_for_trial`.
    * ``uniform``: dx, dy i.i.d. uniform on [-bound, bound].
    * ``gaussian``: dx, dy i.i.d. N(0, (bound/2)^2) truncated to
      [-bound, bound], sampled by rejection.
    """

    kind: str = "none"
    bound: float = 0.05
    omega_x: float | None = None
    omega_y: float | None = None
    phi_x: float | None = None
    phi_y: float | None = None

    def __post_init__(self):
        if self.kind not in UNCERTAINTY_KINDS:
            raise ValueError(f"unknown uncertainty kind {self.kind!r}")
        if self.bound < 0 or not np.isfinite(self.bound):
            raise ValueError(f"bound must be finite and >= 0, got {self.bound}")

    @property
    def norm_bound(self) -> float:
        """Bound on |delta| implied by the componentwise bound."""
        if self.kind == "none":
            return 0.0
        return self.bound * np.sqrt(2.0)

    @property
    def resolved(self) -> bool:
        if self.kind != "periodic":
            return True
        return None not in (self.omega_x, self.omega_y, self.phi_x, self.phi_y)


def realize_for_trial(model: UncertaintyModel, rng: np.random.Generator) -> UncertaintyModel:
    """Draw the per-trial parameters of a periodic model.

    Frequencies come from [0.015pi, 0.025pi] rad/ns and phases from
    [-pi, pi]; fields already set on the model are kept.  Non-periodic
    models are returned unchanged.  The rng is advanced by exactly four
    draws for periodic models so trial streams stay aligned.
    """
    if model.kind != "periodic":
        return model
    draws = rng.uniform(size=4)
    omega_x = model.omega_x
    omega_y = model.omega_y
    phi_x = model.phi_x
    phi_y = model.phi_y
    if omega_x is None:
        omega_x = PERIODIC_FREQ_LOW + draws[0] * (PERIODIC_FREQ_HIGH - PERIODIC_FREQ_LOW)
    if omega_y is None:
        omega_y = PERIODIC_FREQ_LOW + draws[1] * (PERIODIC_FREQ_HIGH - PERIODIC_FREQ_LOW)
    if phi_x is None:
        phi_x = -np.pi + draws[2] * 2.0 * np.pi
    if phi_y is None:
        phi_y = -np.pi + draws[3] * 2.0 * np.pi
    return replace(model, omega_x=omega_x, omega_y=omega_y, phi_x=phi_x, phi_y=phi_y)


def sample_uncertainty(model: UncertaintyModel, k: int, rng: np.random.Generator) -> np.ndarray:
    """Uncertainty vector for step ``k``.

    Periodic models are deterministic functions of ``k``; the random kinds
    draw from ``rng`` (two uniforms for ``uniform``; rejection sampling for
    ``gaussian``).  Every sample satisfies the componentwise bound.
    """
    if k < 0:
        raise ValueError(f"step index must be >= 0, got {k}")
    if model.kind == "none":
        return np.zeros(3)
    if model.kind == "periodic":
        if not model.resolved:
            raise ValueError("periodic model has unresolved parameters; call realize_for_trial")
        # ts enters only through the product omega*ts, and omega is stored
        # in rad/ns while k counts ts-sized steps, so the phase is omega*k*ts.
        dx = model.bound * np.cos(model.omega_x * k + model.phi_x)
        dy = model.bound * np.sin(model.omega_y * k + model.phi_y)
        return np.array([dx, dy, 0.0])
    if model.kind == "uniform":
        dx, dy = rng.uniform(-model.bound, model.bound, size=2)
        return np.array([dx, dy, 0.0])
    # truncated gaussian, stddev bound/2: < 1.1 draws expected per component
    sigma = model.bound / 2.0
    out = np.zeros(3)
    for i in range(2):
        while True:
            val = rng.normal(0.0, sigma)
            if abs(val) <= model.bound:
                out[i] = val
                break
    return out


def coefficient_vector(model: NominalModel, u) -> np.ndarray:
    """Total Hamiltonian coefficients ``u + (0, 0, r)`` after validating axes."""
    u = np.asarray(u, dtype=np.float64)
    if u.shape != (3,):
        raise ValueError(f"control vector must have 3 components, got shape {u.shape}")
    if not np.all(np.isfinite(u)):
        raise ValueError("control vector has non-finite components")
    active = model.axis_indices
    for i in range(3):
        if i not in active and u[i] != 0.0:
            raise ValueError(
                f"control on inactive axis {'xyz'[i]!r} (active: {model.control_axes})"
            )
    return u + model.drift


def nominal_step(model: NominalModel, u, psi) -> np.ndarray:
    """One step of the uncertainty-free system."""
    w = coefficient_vector(model, u)
    return apply(pauli_exponential(w, model.ts), as_state(psi))


def uncertain_step(model: NominalModel, u, delta, psi) -> np.ndarray:
    """One step of the real system: generator ``u + (0,0,r) + delta``.

    No bound is enforced on ``delta`` here; callers that care (the Monte
    Carlo harness) check it against the configured model.
    """
    delta = np.asarray(delta, dtype=np.float64)
    if delta.shape != (3,):
        raise ValueError(f"uncertainty vector must have 3 components, got shape {delta.shape}")
    if not np.all(np.isfinite(delta)):
        raise ValueError("uncertainty vector has non-finite components")
    w = coefficient_vector(model, u) + delta
    return apply(pauli_exponential(w, model.ts), as_state(psi))
