"""Experiment configuration: a flat key/value file plus CLI overrides.

The config format is one ``key = value`` pair per line, ``#`` comments.
Unknown keys are hard errors; silent typos have ruined enough studies.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .dynamics import UNCERTAINTY_KINDS, NominalModel, UncertaintyModel
from .grape import GrapeParams
from .solver import OcpSpec, SolverParams

__all__ = ["ExperimentConfig", "parse_config_file", "config_from_file"]

ALGORITHMS = ("qtompc", "tompc", "grape")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one experiment needs: model, OCP, uncertainty, scale."""

    algorithm: str = "qtompc"
    r: float = 0.05
    ts: float = 1.0
    control_axes: str = "xy"
    horizon: int = 10
    theta: float = 1.9
    bound: float = 0.5
    eps_f: float = 1e-4
    uncertainty: str = "uniform"
    delta_bound: float = 0.05
    omega_x: float | None = None
    omega_y: float | None = None
    phi_x: float | None = None
    phi_y: float | None = None
    n_steps: int = 100
    trials: int = 300
    seed: int = 20240801
    out: str = "results"

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if self.uncertainty not in UNCERTAINTY_KINDS:
            raise ValueError(
                f"uncertainty must be one of {UNCERTAINTY_KINDS}, got {self.uncertainty!r}"
            )
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")
        if self.n_steps < 1:
            raise ValueError(f"n_steps must be >= 1, got {self.n_steps}")

    def model(self) -> NominalModel:
        return NominalModel(r=self.r, control_axes=tuple(self.control_axes), ts=self.ts)

    def ocp_spec(self, target) -> OcpSpec:
        return OcpSpec(
            model=self.model(),
            horizon=self.horizon,
            theta=self.theta,
            bound=self.bound,
            target=target,
        )

    def solver_params(self) -> SolverParams:
        # solver restarts are seeded independently of the trial streams
        return SolverParams(eps_f=self.eps_f, seed=0)

    def grape_params(self) -> GrapeParams:
        return GrapeParams(n_steps=self.n_steps, bound=self.bound, seed=self.seed)

    def uncertainty_model(self) -> UncertaintyModel:
        return UncertaintyModel(
            kind=self.uncertainty,
            bound=self.delta_bound,
            omega_x=self.omega_x,
            omega_y=self.omega_y,
            phi_x=self.phi_x,
            phi_y=self.phi_y,
        )

    def canonical_text(self) -> str:
        lines = []
        for f in fields(self):
            lines.append(f"{f.name} = {getattr(self, f.name)}")
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()[:16]

    def with_overrides(self, **kwargs) -> "ExperimentConfig":
        kwargs = {k: v for k, v in kwargs.items() if v is not None}
        return replace(self, **kwargs)


_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}
_INT_KEYS = {"horizon", "n_steps", "trials", "seed"}
_FLOAT_KEYS = {
    "r", "ts", "theta", "bound", "eps_f", "delta_bound",
    "omega_x", "omega_y", "phi_x", "phi_y",
}
_STR_KEYS = {"algorithm", "control_axes", "uncertainty", "out"}


def parse_config_file(path: str | Path) -> dict:
    """Read ``key = value`` lines; raise on anything unrecognized."""
    out: dict = {}
    text = Path(path).read_text()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key in out:
            raise ValueError(f"{path}:{lineno}: duplicate key {key!r}")
        if key in _INT_KEYS:
            out[key] = int(value)
        elif key in _FLOAT_KEYS:
            out[key] = float(value)
        elif key in _STR_KEYS:
            out[key] = value
        else:
            raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
    return out


def config_from_file(path: str | Path) -> ExperimentConfig:
    return ExperimentConfig(**parse_config_file(path))
