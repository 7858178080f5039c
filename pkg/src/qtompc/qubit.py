"""Two-level state and propagator algebra.

States are complex 2-vectors of unit norm, propagators are 2x2 unitaries
built from exponentials of Pauli-matrix combinations.  Everything here is
a pure function on immutable numpy values; nothing mutates its inputs.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "SIGMA_X",
    "SIGMA_Y",
    "SIGMA_Z",
    "IDENTITY",
    "KET0",
    "KET1",
    "NumericError",
    "as_state",
    "canonicalize_phase",
    "pauli_exponential",
    "pauli_exponential_batch",
    "apply",
    "apply_batch",
    "fidelity_sq",
    "trace_distance",
    "state_to_bloch",
    "bloch_to_state",
]

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=np.complex128)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=np.complex128)
IDENTITY = np.eye(2, dtype=np.complex128)

KET0 = np.array([1, 0], dtype=np.complex128)
KET1 = np.array([0, 1], dtype=np.complex128)

PHASE_ATOL = 1e-12
NORM_RENORM_TOL = 1e-12
NORM_ERROR_TOL = 1e-8


class NumericError(RuntimeError):
    """Raised when a numerical invariant is violated beyond repairable drift."""


def as_state(amplitudes) -> np.ndarray:
    """Validate and return a unit-norm complex 2-vector.

    Norm drift up to ``1e-12`` is silently repaired; drift beyond ``1e-8``
    raises :class:`NumericError` (it indicates a broken propagator rather
    than accumulated rounding).
    """
    psi = np.asarray(amplitudes, dtype=np.complex128)
    if psi.shape != (2,):
        raise ValueError(f"state must be a complex 2-vector, got shape {psi.shape}")
    if not np.all(np.isfinite(psi.view(np.float64))):
        raise ValueError("state has non-finite amplitudes")
    norm = np.linalg.norm(psi)
    drift = abs(norm - 1.0)
    if drift > NORM_ERROR_TOL:
        raise NumericError(f"state norm {norm!r} drifted beyond {NORM_ERROR_TOL}")
    if drift > NORM_RENORM_TOL:
        psi = psi / norm
    return psi


def canonicalize_phase(psi: np.ndarray) -> np.ndarray:
    """Fix the global phase so the first significant amplitude is real >= 0.

    Applied at comparison boundaries only; propagation itself never
    rephases states.
    """
    psi = np.asarray(psi, dtype=np.complex128)
    for amp in psi:
        mag = abs(amp)
        if mag > PHASE_ATOL:
            return psi * (amp.conjugate() / mag)
    return psi.copy()


def pauli_exponential(w, ts: float) -> np.ndarray:
    """Propagator ``exp(-i * ts * w . sigma)`` for a real coefficient 3-vector.

    Closed form: ``cos(|w| ts) I - i sin(|w| ts) (w/|w|) . sigma``.  For
    ``|w| ts`` below 1e-14 the identity is returned exactly (the limit is
    well defined).

    Args:
        w: coefficient vector (rad/ns) multiplying (sigma_x, sigma_y, sigma_z).
        ts: step duration (ns), must be >= 0.
    """
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (3,):
        raise ValueError(f"coefficient vector must have 3 components, got shape {w.shape}")
    if not np.all(np.isfinite(w)):
        raise ValueError("coefficient vector has non-finite components")
    if not np.isfinite(ts) or ts < 0:
        raise ValueError(f"step duration must be finite and >= 0, got {ts}")
    mag = float(np.linalg.norm(w))
    angle = mag * ts
    if angle < 1e-14:
        return IDENTITY.copy()
    nx, ny, nz = w / mag
    c = np.cos(angle)
    s = np.sin(angle)
    return np.array(
        [
            [c - 1j * s * nz, -1j * s * (nx - 1j * ny)],
            [-1j * s * (nx + 1j * ny), c + 1j * s * nz],
        ],
        dtype=np.complex128,
    )


def pauli_exponential_batch(w: np.ndarray, ts: float) -> np.ndarray:
    """Vectorized :func:`pauli_exponential` for ``w`` of shape ``(n, 3)``.

    Returns an ``(n, 2, 2)`` array of propagators.  Used by the solver and
    grid sweeps; semantics match the scalar version entrywise.
    """
    w = np.asarray(w, dtype=np.float64)
    mag = np.sqrt(np.einsum("...i,...i->...", w, w))
    angle = mag * ts
    safe = np.where(mag > 0.0, mag, 1.0)
    c = np.cos(angle)
    s = np.where(angle < 1e-14, 0.0, np.sin(angle)) / safe
    sx = s * w[..., 0]
    sy = s * w[..., 1]
    sz = s * w[..., 2]
    u = np.empty(w.shape[:-1] + (2, 2), dtype=np.complex128)
    u[..., 0, 0] = c - 1j * sz
    u[..., 0, 1] = -sy - 1j * sx
    u[..., 1, 0] = sy - 1j * sx
    u[..., 1, 1] = c + 1j * sz
    return u


def apply(u: np.ndarray, psi: np.ndarray) -> np.ndarray:
    """Apply a 2x2 unitary to a state, renormalizing sub-1e-12 drift."""
    return as_state(u @ np.asarray(psi, dtype=np.complex128))


def apply_batch(u: np.ndarray, psi: np.ndarray) -> np.ndarray:
    """Batched matrix-vector product: ``(n,2,2) @ (n,2) -> (n,2)``."""
    return np.einsum("...ij,...j->...i", u, psi)


def fidelity_sq(a, b) -> float:
    """Squared overlap ``|<a|b>|**2``, clipped into [0, 1].

    Invariant under global phase of either argument.
    """
    a = np.asarray(a, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    val = abs(np.vdot(a, b)) ** 2
    return float(min(max(val, 0.0), 1.0))


def trace_distance(a, b) -> float:
    """Pure-state trace distance ``sqrt(1 - |<a|b>|**2)``.

    Equals half the Euclidean distance between the Bloch vectors.  A
    radicand below -1e-12 raises :class:`NumericError`; tiny negatives are
    clamped to zero.
    """
    radicand = 1.0 - fidelity_sq(a, b)
    if radicand < -1e-12:
        raise NumericError(f"trace-distance radicand {radicand} below tolerance")
    return float(np.sqrt(max(radicand, 0.0)))


def state_to_bloch(psi) -> np.ndarray:
    """Bloch vector (x1, x2, x3) of a pure state."""
    psi = as_state(psi)
    a, b = psi
    return np.array(
        [
            2.0 * (a.conjugate() * b).real,
            2.0 * (a.conjugate() * b).imag,
            (abs(a) ** 2 - abs(b) ** 2),
        ]
    )


def bloch_to_state(n) -> np.ndarray:
    """Pure state for a unit Bloch vector, in canonical phase."""
    n = np.asarray(n, dtype=np.float64)
    if n.shape != (3,):
        raise ValueError(f"Bloch vector must have 3 components, got shape {n.shape}")
    norm = np.linalg.norm(n)
    if abs(norm - 1.0) > 1e-9:
        raise ValueError(f"Bloch vector must be unit length for a pure state, |n|={norm}")
    n = n / norm
    theta = np.arccos(np.clip(n[2], -1.0, 1.0))
    phi = np.arctan2(n[1], n[0])
    psi = np.array([np.cos(theta / 2.0), np.exp(1j * phi) * np.sin(theta / 2.0)])
    return canonicalize_phase(as_state(psi))
