"""Problem description types shared by the forward, adjoint and control layers."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from typing import Optional

import numpy as np

from .errors import ShapeMismatch
from .grid import Grid, TimeGrid
from .potential import Potential

__all__ = [
    "PhysicsParams",
    "InitialData",
    "SolverOptions",
    "CostSpec",
    "ControlBox",
    "ProblemSpec",
]


@dataclasses.dataclass(frozen=True)
class PhysicsParams:
    """Coefficients of the coupled system.

    visc: viscosity coefficient on the phase time-derivative (>= 0).
    latent: latent-heat coupling in the balance equation.
    coupling: strength of the temperature feedback in the phase equation.

    latent and coupling are positive in the modelled regime; zero values are
    admitted structurally because the energy-decay diagnostic runs the
    decoupled limit. Strict positivity is enforced by ProblemSpec.validate.
    """

    visc: float = 0.0
    latent: float = 1.0
    coupling: float = 1.0

    def __post_init__(self):
        if self.visc < 0:
            raise ValueError("visc must be nonnegative")
        if self.latent < 0 or self.coupling < 0:
            raise ValueError("latent and coupling must be nonnegative")


@dataclasses.dataclass(frozen=True)
class InitialData:
    """Initial temperature and phase fields (flattened cell values)."""

    theta0: np.ndarray
    phi0: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "theta0", np.asarray(self.theta0, dtype=float))
        object.__setattr__(self, "phi0", np.asarray(self.phi0, dtype=float))

    def validate(self, grid: Grid, potential: Potential) -> list[str]:
        bad = []
        for name, arr in (("theta0", self.theta0), ("phi0", self.phi0)):
            if arr.shape != (grid.ncells,):
                bad.append(f"initial.{name}: shape {arr.shape} != ({grid.ncells},)")
            elif not np.all(np.isfinite(arr)):
                bad.append(f"initial.{name}: non-finite entries")
        if self.phi0.shape == (grid.ncells,) and np.all(np.isfinite(self.phi0)):
            if potential.is_singular and not np.all(potential.contains(self.phi0)):
                bad.append(
                    f"initial.phi0: values must lie strictly inside "
                    f"({potential.lo}, {potential.hi})"
                )
            m0 = float(np.sum(self.phi0)) / grid.ncells
            if not (potential.lo < m0 < potential.hi):
                bad.append(
                    f"initial.phi0: mean {m0!r} not strictly inside "
                    f"({potential.lo}, {potential.hi})"
                )
        return bad


@dataclasses.dataclass(frozen=True)
class SolverOptions:
    """Tolerances for the per-step Newton solve and the linear algebra."""

    newton_tol: float = 1.0e-12
    newton_max_iter: int = 50
    newton_max_backtracks: int = 40
    linear_rtol: float = 1.0e-10
    mean_rtol: float = 1.0e-12


@dataclasses.dataclass(frozen=True)
class CostSpec:
    """Quadratic tracking cost.

    J = w_theta/2 * ||theta - theta_target||^2_Q
      + w_phi/2 * ||phi - phi_target||^2_Q
      + w_theta_final/2 * ||theta(T) - theta_final_target||^2_Omega
      + w_phi_final/2 * ||phi(T) - phi_final_target||^2_Omega

    Running targets may be scalars, single fields (held constant in time) or
    fully time-indexed arrays of shape (steps, ncells). Weights are
    nonnegative; an all-zero cost is legal and makes every control optimal.
    """

    w_theta: float = 0.0
    w_phi: float = 0.0
    w_theta_final: float = 0.0
    w_phi_final: float = 0.0
    theta_target: np.ndarray | float = 0.0
    phi_target: np.ndarray | float = 0.0
    theta_final_target: np.ndarray | float = 0.0
    phi_final_target: np.ndarray | float = 0.0

    def __post_init__(self):
        for w in (self.w_theta, self.w_phi, self.w_theta_final, self.w_phi_final):
            if w < 0:
                raise ValueError("cost weights must be nonnegative")

    def scaled(self, s: float) -> "CostSpec":
        return dataclasses.replace(
            self,
            w_theta=s * self.w_theta,
            w_phi=s * self.w_phi,
            w_theta_final=s * self.w_theta_final,
            w_phi_final=s * self.w_phi_final,
        )

    def running_targets(self, grid: Grid, tgrid: TimeGrid) -> tuple[np.ndarray, np.ndarray]:
        return (
            _as_time_indexed(self.theta_target, grid, tgrid, "theta_target"),
            _as_time_indexed(self.phi_target, grid, tgrid, "phi_target"),
        )

    def final_targets(self, grid: Grid) -> tuple[np.ndarray, np.ndarray]:
        return (
            _as_field(self.theta_final_target, grid, "theta_final_target"),
            _as_field(self.phi_final_target, grid, "phi_final_target"),
        )


def _as_field(value, grid: Grid, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return np.full(grid.ncells, float(arr))
    if arr.shape == (grid.ncells,):
        return arr
    raise ShapeMismatch(f"{name}: shape {arr.shape} incompatible with ({grid.ncells},)")


def _as_time_indexed(value, grid: Grid, tgrid: TimeGrid, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    shape = (tgrid.steps, grid.ncells)
    if arr.ndim == 0:
        return np.full(shape, float(arr))
    if arr.shape == (grid.ncells,):
        return np.broadcast_to(arr, shape).copy()
    if arr.shape == shape:
        return arr
    raise ShapeMismatch(f"{name}: shape {arr.shape} incompatible with {shape}")


@dataclasses.dataclass(frozen=True)
class ControlBox:
    """Pointwise admissible bounds for the distributed control."""

    lower: np.ndarray | float = -1.0
    upper: np.ndarray | float = 1.0

    def resolve(self, grid: Grid, tgrid: TimeGrid) -> tuple[np.ndarray, np.ndarray]:
        lo = _as_time_indexed(self.lower, grid, tgrid, "box.lower")
        hi = _as_time_indexed(self.upper, grid, tgrid, "box.upper")
        return lo, hi

    def validate(self, grid: Grid, tgrid: TimeGrid) -> list[str]:
        try:
            lo, hi = self.resolve(grid, tgrid)
        except ShapeMismatch as exc:
            return [str(exc)]
        bad = np.argwhere(lo > hi)
        if bad.size:
            k, i = (int(v) for v in bad[0])
            return [
                f"box: lower > upper at time level {k + 1}, cell {i} "
                f"({lo[k, i]!r} > {hi[k, i]!r})"
            ]
        return []


@dataclasses.dataclass(frozen=True)
class ProblemSpec:
    """Everything needed to state the control problem on one mesh."""

    grid: Grid
    tgrid: TimeGrid
    physics: PhysicsParams
    potential: Potential
    init: InitialData
    cost: CostSpec = dataclasses.field(default_factory=CostSpec)
    box: ControlBox = dataclasses.field(default_factory=ControlBox)
    options: SolverOptions = dataclasses.field(default_factory=SolverOptions)

    def validate(self, for_control: bool = False) -> list[str]:
        """Collect every violation; empty list means valid.

        for_control additionally enforces the hypotheses of the optimization
        theory: strictly positive latent/coupling coefficients and, for
        singular potentials, positive viscosity.
        """
        bad = self.init.validate(self.grid, self.potential)
        bad += self.box.validate(self.grid, self.tgrid)
        if self.potential.is_singular and self.potential.yosida_eps == 0 and self.physics.visc == 0:
            bad.append(
                "physics.visc: singular potential in exact mode requires positive "
                "viscosity (visc > 0)"
            )
        if for_control:
            if self.physics.latent <= 0:
                bad.append("physics.latent: must be positive for the control problem")
            if self.physics.coupling <= 0:
                bad.append("physics.coupling: must be positive for the control problem")
            if self.potential.is_singular and self.physics.visc <= 0:
                bad.append(
                    "physics.visc: singular potential requires visc > 0 for the "
                    "control problem"
                )
        try:
            self.cost.running_targets(self.grid, self.tgrid)
            self.cost.final_targets(self.grid)
        except ShapeMismatch as exc:
            bad.append(str(exc))
        return bad

    def digest(self) -> str:
        """Stable content hash for provenance lines in reports."""
        pot = self.potential
        payload = {
            "grid": {"cells": list(self.grid.cells), "lengths": list(self.grid.lengths)},
            "time": {"horizon": self.tgrid.horizon, "steps": self.tgrid.steps},
            "physics": dataclasses.asdict(self.physics),
            "potential": {
                "kind": pot.kind,
                "lo": None if math.isinf(pot.lo) else pot.lo,
                "hi": None if math.isinf(pot.hi) else pot.hi,
                "eps": pot.yosida_eps,
            },
            "init": {
                "theta0": self.init.theta0.tolist(),
                "phi0": self.init.phi0.tolist(),
            },
            "cost": {
                "w": [
                    self.cost.w_theta,
                    self.cost.w_phi,
                    self.cost.w_theta_final,
                    self.cost.w_phi_final,
                ],
                "theta_target": np.asarray(self.cost.theta_target).tolist(),
                "phi_target": np.asarray(self.cost.phi_target).tolist(),
                "theta_final_target": np.asarray(self.cost.theta_final_target).tolist(),
                "phi_final_target": np.asarray(self.cost.phi_final_target).tolist(),
            },
            "box": {
                "lower": np.asarray(self.box.lower).tolist(),
                "upper": np.asarray(self.box.upper).tolist(),
            },
        }
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()
