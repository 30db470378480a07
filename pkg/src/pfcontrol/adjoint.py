"""Adjoint of the discrete tangent system and the tracking-cost machinery.

The tangent recursion is, per step k -> k+1,

    A_k X_{k+1} = M_k X_k + dt * (h_{k+1}, 0, 0)

with A_k the step operator linearized at the stored solution (step_matrix)
and M_k collecting the old-level terms. The adjoint sweep solves the exact
transposes backward,

    A_{Nt-1}^T y_Nt = d_Nt,
    A_{k-1}^T y_k = d_k + M_k^T y_{k+1}    (k = Nt-1 .. 1),

where d_k is the Euclidean gradient of the discrete cost with respect to the
stacked state at level k. By construction the duality identity

    sum_k dt * (q_k, h_k)_Omega = d/d(delta) J(S(u + delta h)) |_0

holds to linear-solver precision, and the multiplier block attached to the
balance equation, divided by the cell measure, is the reduced gradient q.

The level-0 entries of the returned (q, p) duplicate level 1: the
backward-Euler adjoint is defined on levels 1..Nt.
"""

from __future__ import annotations

import dataclasses

import numpy as np
from scipy.sparse.linalg import splu

from .errors import LinearSolveDivergence, ShapeMismatch
from .dynamics import TangentSolution, Trajectory, step_matrix
from .grid import Grid, TimeGrid
from .problem import CostSpec, PhysicsParams, ProblemSpec

__all__ = [
    "AdjointSolution",
    "terminal_conditions",
    "solve_adjoint",
    "cost_value",
    "cost_state_gradient",
    "dj_along_tangent",
]


@dataclasses.dataclass(frozen=True)
class AdjointSolution:
    """Backward multipliers: q pairs with the balance equation, p with the
    conserved phase equation. Both are level-indexed 0..Nt."""

    grid: Grid
    tgrid: TimeGrid
    q: np.ndarray
    p: np.ndarray

    def reduced_gradient(self) -> np.ndarray:
        """q at the running levels 1..Nt, shaped like a control."""
        return self.q[1:].copy()


def _check_state(state: Trajectory, grid: Grid, tgrid: TimeGrid) -> None:
    want = (tgrid.steps + 1, grid.ncells)
    if state.theta.shape != want or state.phi.shape != want:
        raise ShapeMismatch(
            f"trajectory shape {state.theta.shape} does not match {want}"
        )


def cost_value(state: Trajectory, cost: CostSpec) -> float:
    """Discrete tracking cost: right-endpoint rectangle rule in time."""
    grid, tgrid = state.grid, state.tgrid
    _check_state(state, grid, tgrid)
    theta_q, phi_q = cost.running_targets(grid, tgrid)
    theta_om, phi_om = cost.final_targets(grid)
    dt, m = tgrid.dt, grid.cell_measure
    running = 0.0
    if cost.w_theta:
        diff = state.theta[1:] - theta_q
        running += 0.5 * cost.w_theta * float(np.sum(diff * diff))
    if cost.w_phi:
        diff = state.phi[1:] - phi_q
        running += 0.5 * cost.w_phi * float(np.sum(diff * diff))
    total = running * dt * m
    if cost.w_theta_final:
        diff = state.theta[-1] - theta_om
        total += 0.5 * cost.w_theta_final * float(np.sum(diff * diff)) * m
    if cost.w_phi_final:
        diff = state.phi[-1] - phi_om
        total += 0.5 * cost.w_phi_final * float(np.sum(diff * diff)) * m
    return total


def cost_state_gradient(state: Trajectory, cost: CostSpec) -> tuple[np.ndarray, np.ndarray]:
    """Euclidean gradients of the cost w.r.t. theta / phi at levels 1..Nt.

    Includes the quadrature weights (dt * cell measure) and, at the final
    level, the terminal terms.
    """
    grid, tgrid = state.grid, state.tgrid
    _check_state(state, grid, tgrid)
    theta_q, phi_q = cost.running_targets(grid, tgrid)
    theta_om, phi_om = cost.final_targets(grid)
    dt, m = tgrid.dt, grid.cell_measure
    d_theta = cost.w_theta * (state.theta[1:] - theta_q) * dt * m
    d_phi = cost.w_phi * (state.phi[1:] - phi_q) * dt * m
    d_theta[-1] += cost.w_theta_final * (state.theta[-1] - theta_om) * m
    d_phi[-1] += cost.w_phi_final * (state.phi[-1] - phi_om) * m
    return d_theta, d_phi


def dj_along_tangent(tangent: TangentSolution, state: Trajectory, cost: CostSpec) -> float:
    """Chain-rule derivative of the cost along a tangent solution."""
    d_theta, d_phi = cost_state_gradient(state, cost)
    return float(np.sum(d_theta * tangent.dtheta[1:]) + np.sum(d_phi * tangent.dphi[1:]))


def terminal_conditions(
    state: Trajectory, cost: CostSpec, physics: PhysicsParams
) -> tuple[np.ndarray, np.ndarray]:
    """Continuum-form terminal data: q_T = g3 and (I - visc * Lap) p_T = g4 - latent * g3,

    with g3, g4 the terminal cost residuals. This is the dt -> 0 limit of the
    terminal block of the exact-transpose sweep, exposed for cross-checks and
    reporting.
    """
    grid = state.grid
    theta_om, phi_om = cost.final_targets(grid)
    g3 = cost.w_theta_final * (state.theta[-1] - theta_om)
    g4 = cost.w_phi_final * (state.phi[-1] - phi_om)
    q_t = g3
    rhs = g4 - physics.latent * g3
    p_t = grid.helmholtz_solve(rhs, physics.visc) if physics.visc > 0 else rhs.copy()
    return q_t, p_t


def solve_adjoint(state: Trajectory, cost: CostSpec, spec: ProblemSpec) -> AdjointSolution:
    """Backward sweep with the exact transposes of the tangent step operators.

    Only second-order blocks are ever factorized; the fourth-order composite
    operator of the strong form never appears.
    """
    grid, tgrid = state.grid, state.tgrid
    if grid is not spec.grid and grid.cells != spec.grid.cells:
        raise ShapeMismatch("state grid does not match the problem spec")
    _check_state(state, grid, tgrid)
    n, nt, dt = grid.ncells, tgrid.steps, tgrid.dt
    physics, pot = spec.physics, spec.potential
    visc_dt = physics.visc / dt
    m = grid.cell_measure

    d_theta, d_phi = cost_state_gradient(state, cost)
    q = np.zeros((nt + 1, n))
    p = np.zeros((nt + 1, n))
    y1 = np.zeros(n)
    y2 = np.zeros(n)
    y3 = np.zeros(n)
    for level in range(nt, 0, -1):
        rhs_theta = d_theta[level - 1]
        rhs_phi = d_phi[level - 1]
        rhs_mu = np.zeros(n)
        if level < nt:
            # M_k^T y_{k+1} for the step leaving this level.
            rest_slope = pot.d2w_rest(state.phi[level])
            rhs_theta = rhs_theta + y1
            rhs_phi = rhs_phi + physics.latent * y1 + y2 + (rest_slope - visc_dt) * y3
        op = step_matrix(grid, dt, physics, pot.d2w_convex_eff(state.phi[level]))
        sol = splu(op).solve(np.concatenate([rhs_theta, rhs_phi, rhs_mu]), trans="T")
        if not np.all(np.isfinite(sol)):
            raise LinearSolveDivergence(f"adjoint sweep broke down at level {level}")
        y1, y2, y3 = sol[:n], sol[n : 2 * n], sol[2 * n :]
        q[level] = y1 / m
        p[level] = y2 / m
    q[0] = q[1]
    p[0] = p[1]
    return AdjointSolution(grid=grid, tgrid=tgrid, q=q, p=p)
