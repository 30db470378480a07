"""Backward-Euler time stepping for the coupled conserved phase-field system.

Per step (dt = T / Nt, level n -> n+1, all equations scaled by dt):

    theta' - theta + latent * (phi' - phi) - dt * Lap theta' = dt * v'
    phi' - phi - dt * Lap mu' = 0
    mu' = visc * (phi' - phi) / dt - Lap phi' + B(phi') + lam * R(phi) - coupling * theta'

where primes mark the new level, B is the derivative of the convex potential
part (implicit; Yosida-regularized when eps > 0) and R the derivative of the
smooth remainder (explicit, old level). The implicit/explicit split gives
unconditional energy stability in the decoupled limit, and the conserved-form
phase update keeps mean(phi) constant.

Index conventions: trajectories hold theta, phi at levels 0..Nt; chemical
potential and sources at levels 1..Nt (array index k maps to level k+1).
The generalized coefficient lam is indexed by the OLD level of a step:
lam[k] multiplies R(phi at level k) in the step producing level k+1.

The tangent solver differentiates each discrete step exactly: the implicit
convex term contributes its derivative at the new level, the explicit
remainder its derivative at the old level, with zero initial conditions.
"""

from __future__ import annotations

import dataclasses
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sps
from scipy.sparse.linalg import splu

from .errors import (
    ConfigError,
    DomainEscape,
    LinearSolveDivergence,
    NewtonDivergence,
    ShapeMismatch,
)
from .grid import Grid, TimeGrid
from .potential import Potential
from .problem import InitialData, PhysicsParams, ProblemSpec, SolverOptions

__all__ = [
    "GeneralizedProblem",
    "Trajectory",
    "TangentSolution",
    "solve_generalized",
    "solve_state",
    "solve_tangent",
    "mixture_energy",
    "step_matrix",
]

#: Relative distance to the domain boundary preserved by the Newton safeguard.
_BOUNDARY_FRACTION = 0.99
_MIN_STEP_FRACTION = 1.0e-10


@dataclasses.dataclass(frozen=True)
class GeneralizedProblem:
    """Forward problem with a per-level coefficient on the explicit term.

    mode "full": the phase equation carries B(phi') + lam * R(phi).
    mode "linear": B is off and the explicit term is lam * phi (identity
    remainder), so every step is a single linear solve.
    """

    physics: PhysicsParams
    potential: Potential
    init: InitialData
    source: np.ndarray
    lam: np.ndarray | float = 1.0
    mode: str = "full"


@dataclasses.dataclass(frozen=True)
class Trajectory:
    """Discrete trajectory, level-indexed as described in the module docstring."""

    grid: Grid
    tgrid: TimeGrid
    theta: np.ndarray
    phi: np.ndarray
    mu: np.ndarray
    source: np.ndarray

    def phase_mean_history(self) -> np.ndarray:
        return self.phi.sum(axis=1) / self.grid.ncells


@dataclasses.dataclass(frozen=True)
class TangentSolution:
    """Directional state derivative along a control direction."""

    grid: Grid
    tgrid: TimeGrid
    dtheta: np.ndarray
    dphi: np.ndarray
    dmu: np.ndarray


def step_matrix(
    grid: Grid, dt: float, physics: PhysicsParams, dconvex: np.ndarray
) -> sps.csc_matrix:
    """Implicit block operator of one step, linearized at the given convex slope.

    Blocks act on the stacked new-level unknowns (theta, phi, mu). The same
    matrix is the per-step tangent operator, and its transpose drives the
    adjoint sweep.
    """
    n = grid.ncells
    lap = grid.laplacian
    eye = sps.identity(n, format="csr")
    a11 = eye - dt * lap
    a12 = physics.latent * eye
    a23 = -dt * lap
    a31 = physics.coupling * eye
    a32 = lap - sps.diags(physics.visc / dt + np.asarray(dconvex, dtype=float))
    return sps.bmat([[a11, a12, None], [None, eye, a23], [a31, a32, eye]], format="csc")


def _domain_guard(potential: Potential) -> Callable[[np.ndarray, np.ndarray], float]:
    lo, hi = potential.lo, potential.hi

    def guard(phi: np.ndarray, dphi: np.ndarray) -> float:
        alpha = 1.0
        if np.isfinite(lo):
            falling = dphi < 0
            if np.any(falling):
                room = phi[falling] - lo
                alpha = min(alpha, float(np.min(_BOUNDARY_FRACTION * room / -dphi[falling])))
        if np.isfinite(hi):
            rising = dphi > 0
            if np.any(rising):
                room = hi - phi[rising]
                alpha = min(alpha, float(np.min(_BOUNDARY_FRACTION * room / dphi[rising])))
        return alpha

    return guard


def _advance_step(
    grid: Grid,
    dt: float,
    physics: PhysicsParams,
    convex: Callable[[np.ndarray], np.ndarray],
    dconvex: Callable[[np.ndarray], np.ndarray],
    explicit: np.ndarray,
    theta_n: np.ndarray,
    phi_n: np.ndarray,
    mu_guess: np.ndarray,
    source_level: np.ndarray,
    opts: SolverOptions,
    guard: Optional[Callable[[np.ndarray, np.ndarray], float]],
    noise_floor: float = 0.0,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One damped-Newton solve of the coupled step equations.

    noise_floor lifts the tolerance to the evaluation noise of the nonlinear
    terms (the Yosida values carry the resolvent root error amplified by
    1/eps), below which the residual cannot be driven reliably.
    """
    n = grid.ncells
    lap = grid.laplacian
    latent, coupling, visc = physics.latent, physics.coupling, physics.visc

    def residual(th, ph, m):
        r1 = th - theta_n + latent * (ph - phi_n) - dt * (lap @ th) - dt * source_level
        r2 = ph - phi_n - dt * (lap @ m)
        r3 = (
            m
            - visc * (ph - phi_n) / dt
            + lap @ ph
            - convex(ph)
            - explicit
            + coupling * th
        )
        return np.concatenate([r1, r2, r3])

    theta, phi, mu = theta_n.copy(), phi_n.copy(), mu_guess.copy()
    scale = 1.0 + max(float(np.max(np.abs(theta_n))), float(np.max(np.abs(phi_n))))
    tol = max(opts.newton_tol, noise_floor) * scale
    res = residual(theta, phi, mu)
    res_norm = float(np.max(np.abs(res)))
    for _ in range(opts.newton_max_iter):
        if res_norm <= tol:
            return theta, phi, mu
        jac = step_matrix(grid, dt, physics, dconvex(phi))
        delta = splu(jac).solve(-res)
        if not np.all(np.isfinite(delta)):
            raise NewtonDivergence("Newton step produced non-finite values")
        d_theta, d_phi, d_mu = delta[:n], delta[n : 2 * n], delta[2 * n :]
        alpha = 1.0
        if guard is not None:
            alpha = min(1.0, guard(phi, d_phi))
            if alpha < _MIN_STEP_FRACTION:
                raise DomainEscape(
                    "Newton iterate pinned to the potential domain boundary"
                )
        accepted = False
        for _ in range(opts.newton_max_backtracks):
            trial = (theta + alpha * d_theta, phi + alpha * d_phi, mu + alpha * d_mu)
            trial_res = residual(*trial)
            trial_norm = float(np.max(np.abs(trial_res)))
            if np.isfinite(trial_norm) and (trial_norm < res_norm or trial_norm <= tol):
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            raise NewtonDivergence(
                f"Newton damping stalled at residual {res_norm:.3e} (tol {tol:.1e})"
            )
        theta, phi, mu = trial
        res, res_norm = trial_res, trial_norm
    if res_norm <= tol:
        return theta, phi, mu
    raise NewtonDivergence(
        f"no convergence in {opts.newton_max_iter} iterations "
        f"(residual {res_norm:.3e}, tol {tol:.1e})"
    )


def _resolve_lam(lam, tgrid: TimeGrid, grid: Grid) -> np.ndarray:
    arr = np.asarray(lam, dtype=float)
    shape = (tgrid.steps, grid.ncells)
    if arr.ndim == 0:
        return np.full(shape, float(arr))
    if arr.shape == (grid.ncells,):
        return np.broadcast_to(arr, shape).copy()
    if arr.shape == shape:
        return arr
    raise ShapeMismatch(f"lam: shape {arr.shape} incompatible with {shape}")


def solve_generalized(
    problem: GeneralizedProblem,
    grid: Grid,
    tgrid: TimeGrid,
    opts: SolverOptions | None = None,
) -> Trajectory:
    """March the generalized system over the whole horizon.

    Raises ConfigError for inadmissible setups, NewtonDivergence /
    DomainEscape when a step cannot be completed.
    """
    opts = opts or SolverOptions()
    if problem.mode not in ("full", "linear"):
        raise ConfigError(f"unknown mode {problem.mode!r}")
    pot = problem.potential
    physics = problem.physics
    exact_singular = pot.is_singular and pot.yosida_eps == 0
    if problem.mode == "full" and exact_singular and physics.visc == 0:
        raise ConfigError(
            "singular potential in exact mode requires positive viscosity"
        )
    bad = problem.init.validate(grid, pot)
    if bad:
        raise ConfigError("; ".join(bad))
    n, nt, dt = grid.ncells, tgrid.steps, tgrid.dt
    source = np.asarray(problem.source, dtype=float)
    if source.shape != (nt, n):
        raise ShapeMismatch(f"source: shape {source.shape} != {(nt, n)}")
    lam = _resolve_lam(problem.lam, tgrid, grid)

    if problem.mode == "full":
        convex = pot.dw_convex_eff
        dconvex = pot.d2w_convex_eff
        remainder = pot.dw_rest
    else:
        convex = lambda r: np.zeros_like(r)
        dconvex = lambda r: np.zeros_like(r)
        remainder = lambda r: r
    guard = _domain_guard(pot) if (problem.mode == "full" and exact_singular) else None
    noise_floor = 0.0
    if problem.mode == "full" and pot.yosida_eps > 0:
        noise_floor = 16.0 * np.finfo(float).eps / pot.yosida_eps

    theta = np.empty((nt + 1, n))
    phi = np.empty((nt + 1, n))
    mu = np.empty((nt, n))
    theta[0] = problem.init.theta0
    phi[0] = problem.init.phi0
    phase_mean = float(np.sum(phi[0])) / n

    mu_guess = (
        -(grid.laplacian @ phi[0])
        + convex(phi[0])
        + lam[0] * remainder(phi[0])
        - physics.coupling * theta[0]
    )
    for k in range(nt):
        explicit = lam[k] * remainder(phi[k])
        theta[k + 1], phi[k + 1], mu[k] = _advance_step(
            grid,
            dt,
            physics,
            convex,
            dconvex,
            explicit,
            theta[k],
            phi[k],
            mu_guess,
            source[k],
            opts,
            guard,
            noise_floor,
        )
        # Re-anchor the conserved mean; the shift is below Newton tolerance.
        phi[k + 1] += phase_mean - float(np.sum(phi[k + 1])) / n
        mu_guess = mu[k]
    return Trajectory(grid=grid, tgrid=tgrid, theta=theta, phi=phi, mu=mu, source=source)


def solve_state(u: np.ndarray, spec: ProblemSpec) -> Trajectory:
    """State system: generalized problem with unit coefficient, full mode."""
    problem = GeneralizedProblem(
        physics=spec.physics,
        potential=spec.potential,
        init=spec.init,
        source=np.asarray(u, dtype=float),
        lam=1.0,
        mode="full",
    )
    return solve_generalized(problem, spec.grid, spec.tgrid, spec.options)


def solve_tangent(h: np.ndarray, base: Trajectory, spec: ProblemSpec) -> TangentSolution:
    """Exact derivative of the discrete state map along direction h.

    Solves, per step, the state Newton operator (linearized at the stored
    new-level phase) against the old-level terms differentiated where they
    were evaluated. Initial conditions are zero and mean(dphi) stays zero.
    """
    grid, tgrid = base.grid, base.tgrid
    n, nt, dt = grid.ncells, tgrid.steps, tgrid.dt
    h = np.asarray(h, dtype=float)
    if h.shape != (nt, n):
        raise ShapeMismatch(f"direction: shape {h.shape} != {(nt, n)}")
    if base.theta.shape != (nt + 1, n):
        raise ShapeMismatch("trajectory does not match the grid/time grid")
    pot, physics = spec.potential, spec.physics
    visc_dt = physics.visc / dt

    dtheta = np.zeros((nt + 1, n))
    dphi = np.zeros((nt + 1, n))
    dmu = np.empty((nt, n))
    for k in range(nt):
        rest_slope = pot.d2w_rest(base.phi[k])
        rhs = np.concatenate(
            [
                dtheta[k] + physics.latent * dphi[k] + dt * h[k],
                dphi[k],
                (rest_slope - visc_dt) * dphi[k],
            ]
        )
        op = step_matrix(grid, dt, physics, pot.d2w_convex_eff(base.phi[k + 1]))
        sol = splu(op).solve(rhs)
        if not np.all(np.isfinite(sol)):
            raise LinearSolveDivergence(f"tangent sweep broke down at step {k}")
        dtheta[k + 1] = sol[:n]
        dphi[k + 1] = sol[n : 2 * n]
        dmu[k] = sol[2 * n :]
    return TangentSolution(grid=grid, tgrid=tgrid, dtheta=dtheta, dphi=dphi, dmu=dmu)


def mixture_energy(grid: Grid, potential: Potential, phi: np.ndarray) -> float:
    """Free energy driving the decoupled flow: gradient term plus both
    potential parts, with the convex part evaluated in the mode that actually
    drives the dynamics (Moreau envelope when regularized)."""
    bulk = potential.w_convex_eff(phi) + potential.w_rest(phi)
    return 0.5 * grid.grad_sq(phi) + grid.integrate(bulk)
