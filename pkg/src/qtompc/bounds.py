"""Analytic robustness and convergence results for the measured closed loop.

Everything is parameterized by the per-step success floor
``c = cos^2(delta_bar * ts)`` (``delta_bar`` the norm bound on the
uncertainty vector) and the horizon ``L``:

* per-step success probability >= c  whenever ``delta_bar * ts < pi/2``;
* failure-to-reach probabilities F_N follow an order-L linear recursion;
* F_N decays geometrically with a closed-form rate bound ``eta`` derived
  from the characteristic polynomial ``g(z) = z^(L+1) - z^L + alpha`` with
  ``alpha = (1-c) c^L``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "BoundInputs",
    "HypothesisViolated",
    "success_bound",
    "failure_probabilities",
    "p_tar_lower_bound",
    "convergence_rate",
    "characteristic_roots",
    "h_function",
    "h_decomposition",
]

CASE_TOL = 1e-12


class HypothesisViolated(ValueError):
    """The sampling-time hypothesis ``delta_bar * ts < pi/2`` fails."""


@dataclass(frozen=True)
class BoundInputs:
    """Derived quantities shared by the bound evaluations."""

    delta_bar: float
    ts: float
    horizon: int

    def __post_init__(self):
        if self.delta_bar < 0:
            raise ValueError(f"delta_bar must be >= 0, got {self.delta_bar}")
        if self.ts <= 0:
            raise ValueError(f"ts must be > 0, got {self.ts}")
        if self.horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {self.horizon}")

    @classmethod
    def from_success(cls, c: float, horizon: int, ts: float = 1.0) -> "BoundInputs":
        """Build inputs from the success floor ``c`` itself."""
        if not 0.0 < c <= 1.0:
            raise ValueError(f"success floor must lie in (0, 1], got {c}")
        delta_bar = float(np.arccos(np.sqrt(c))) / ts
        return cls(delta_bar=delta_bar, ts=ts, horizon=horizon)

    @property
    def c(self) -> float:
        """Per-step success floor cos^2(delta_bar * ts)."""
        return float(np.cos(self.delta_bar * self.ts) ** 2)

    @property
    def s(self) -> float:
        """Per-step failure ceiling sin^2(delta_bar * ts) = 1 - c."""
        return float(np.sin(self.delta_bar * self.ts) ** 2)

    @property
    def alpha(self) -> float:
        """Constant term of the characteristic polynomial: s * c^L."""
        return self.s * self.c**self.horizon


def success_bound(delta_bar: float, ts: float) -> float:
    """Per-step probability floor ``cos^2(delta_bar * ts)``.

    Valid only under ``delta_bar * ts < pi/2``; outside that range the
    floor does not hold and :class:`HypothesisViolated` is raised.
    """
    if delta_bar < 0 or ts <= 0:
        raise ValueError("delta_bar must be >= 0 and ts > 0")
    if delta_bar * ts >= np.pi / 2.0:
        raise HypothesisViolated(
            f"delta_bar*ts = {delta_bar * ts} >= pi/2; the floor does not apply"
        )
    return float(np.cos(delta_bar * ts) ** 2)


def failure_probabilities(inputs: BoundInputs, n: int) -> np.ndarray:
    """F_1..F_n: probability of not having reached the target by each step.

    Base cases: F_k = 1 for k < L (a success run cannot have completed),
    and F_j = 1 for j <= 0 by the same convention.  For N >= L,

        F_N = s * sum_{l=1..L} c^(l-1) * F_{N-l},

    which reproduces F_L = 1 - c^L at N = L.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    L = inputs.horizon
    c, s = inputs.c, inputs.s
    weights = s * c ** np.arange(L)

    def get(values: np.ndarray, j: int) -> float:
        return 1.0 if j <= 0 else float(values[j - 1])

    out = np.ones(n)
    for step in range(1, n + 1):
        if step < L:
            out[step - 1] = 1.0
        else:
            out[step - 1] = float(
                sum(weights[l - 1] * get(out, step - l) for l in range(1, L + 1))
            )
    return out


def p_tar_lower_bound(inputs: BoundInputs, n: int) -> float:
    """Lower bound on P(target reached by step n): ``1 - F_n``, floored at 0.

    Zero for n < L (the run cannot have completed) and tending to 1 as
    n grows since F_n decays geometrically.
    """
    f = failure_probabilities(inputs, n)
    return max(0.0, 1.0 - float(f[-1]))


def convergence_rate(inputs: BoundInputs) -> tuple[int, float]:
    """Geometric decay-rate bound for F_N: returns ``(case, eta)``.

    The case split compares c with L/(L+1) (equality within 1e-12):

    * case 1, c < L/(L+1):  eta = min(1 - alpha, 2L/(L+1) - c)
    * case 2, c > L/(L+1):  eta = 2L/(L+1) - c
    * case 3, c = L/(L+1):  eta = L/(L+1) exactly

    ``eta < 1`` in every case.
    """
    L = inputs.horizon
    c = inputs.c
    threshold = L / (L + 1)
    if abs(c - threshold) <= CASE_TOL:
        return 3, threshold
    if c < threshold:
        eta = min(1.0 - inputs.alpha, 2.0 * L / (L + 1) - c)
        return 1, float(eta)
    return 2, float(2.0 * L / (L + 1) - c)


def characteristic_roots(inputs: BoundInputs) -> np.ndarray:
    """All L+1 roots of ``g(z) = z^(L+1) - z^L + alpha``.

    Companion-matrix eigenvalues (via ``np.roots``) polished by a few
    Newton iterations.  ``z = c`` is an exact root by construction; a
    residual above 1e-10 on any root raises.
    """
    L = inputs.horizon
    alpha = inputs.alpha
    coeffs = np.zeros(L + 2)
    coeffs[0] = 1.0
    coeffs[1] = -1.0
    coeffs[-1] = alpha
    roots = np.roots(coeffs)

    # Newton polish: g(z) = z^(L+1) - z^L + alpha
    for _ in range(3):
        g = roots ** (L + 1) - roots**L + alpha
        dg = (L + 1) * roots**L - L * roots ** (L - 1)
        safe = np.abs(dg) > 1e-30
        roots = np.where(safe, roots - g / np.where(safe, dg, 1.0), roots)

    residual = np.abs(roots ** (L + 1) - roots**L + alpha)
    if np.any(residual > 1e-10):
        from .qubit import NumericError

        raise NumericError(f"root residual {residual.max()} exceeds 1e-10")
    c_residual = abs(inputs.c ** (L + 1) - inputs.c**L + alpha)
    if c_residual > 1e-10:
        from .qubit import NumericError

        raise NumericError(f"|g(c)| = {c_residual} exceeds 1e-10")
    return roots


def max_other_root_modulus(inputs: BoundInputs) -> float:
    """Largest root modulus after removing one root closest to ``z = c``."""
    roots = characteristic_roots(inputs)
    idx = int(np.argmin(np.abs(roots - inputs.c)))
    rest = np.delete(roots, idx)
    if rest.size == 0:
        return 0.0
    return float(np.abs(rest).max())


def _h_terms(v, delta):
    v = np.asarray(v, dtype=np.float64)
    delta = np.asarray(delta, dtype=np.float64)
    if v.shape != (3,) or delta.shape != (3,):
        raise ValueError("v and delta must be real 3-vectors")
    vd = v + delta
    nv = float(np.linalg.norm(v))
    nvd = float(np.linalg.norm(vd))
    nd = float(np.linalg.norm(delta))
    return v, delta, vd, nv, nvd, nd


def h_function(v, delta, ts: float) -> float:
    """Excess of the real overlap over its parallel-disturbance value.

    For one step, the real part of the overlap between the nominal and the
    disturbed propagated states is

        cos(ts|v|) cos(ts|v+d|) + (v.(v+d))/(|v||v+d|) sin(ts|v|) sin(ts|v+d|),

    and ``h`` subtracts the commuting-case value ``cos(ts|d|)``.
    Nonnegative whenever ``|d| ts < pi/2``, which is what pins the
    per-step success probability above ``cos^2(|d| ts)``.

    Degenerate directions (|v| = 0 or |v+d| = 0, where the parallel case is
    exact) return 0.
    """
    if ts <= 0:
        raise ValueError(f"ts must be > 0, got {ts}")
    v, delta, vd, nv, nvd, nd = _h_terms(v, delta)
    if nv < 1e-300 or nvd < 1e-300:
        return 0.0
    cosang = float(np.dot(v, vd)) / (nv * nvd)
    value = (
        np.cos(ts * nv) * np.cos(ts * nvd)
        + cosang * np.sin(ts * nv) * np.sin(ts * nvd)
        - np.cos(nd * ts)
    )
    return float(value)


def h_decomposition(v, delta, ts: float) -> dict[str, float]:
    """Product-to-sum form of :func:`h_function` and its ingredients.

    Returns a1, a2 (convex weights), f1 = |v+d| - |v|, f2 = |v+d| + |v|,
    and ``h = a1 cos(f1 ts) + a2 cos(f2 ts) - cos(|d| ts)``.  On
    non-parallel inputs 0 < a1, a2 < 1 and f1 < |d| < f2.
    """
    if ts <= 0:
        raise ValueError(f"ts must be > 0, got {ts}")
    v, delta, vd, nv, nvd, nd = _h_terms(v, delta)
    if nv < 1e-300 or nvd < 1e-300:
        return {"a1": 1.0, "a2": 0.0, "f1": nd, "f2": nd, "h": 0.0}
    dot = float(np.dot(v, vd))
    a1 = (nv * nvd + dot) / (2.0 * nv * nvd)
    a2 = (nv * nvd - dot) / (2.0 * nv * nvd)
    f1 = nvd - nv
    f2 = nvd + nv
    h = a1 * np.cos(f1 * ts) + a2 * np.cos(f2 * ts) - np.cos(nd * ts)
    return {"a1": float(a1), "a2": float(a2), "f1": float(f1), "f2": float(f2), "h": float(h)}
