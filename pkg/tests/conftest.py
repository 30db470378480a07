"""Shared fixtures: two small 1D configurations exercising both potential
regimes, sized so the full suite stays fast."""

import numpy as np
import pytest

import pfcontrol as pfc


def desk_spec(
    regime: str = "regular",
    cells: int = 32,
    steps: int = 16,
    yosida_eps: float | None = None,
) -> pfc.ProblemSpec:
    """1D reference configuration on the unit interval.

    regular: quartic potential, no viscosity.
    log: logarithmic potential (c = 2), unit viscosity; exact by default.
    """
    grid = pfc.Grid(cells)
    tgrid = pfc.TimeGrid(1.0, steps)
    x = grid.coords()[:, 0]
    if regime == "regular":
        potential = pfc.quartic_double_well(yosida_eps or 0.0)
        physics = pfc.PhysicsParams(visc=0.0, latent=1.0, coupling=1.0)
        phi0 = 0.2 * np.cos(np.pi * x) + 0.05
    elif regime == "log":
        potential = pfc.log_double_well(c=2.0, yosida_eps=yosida_eps or 0.0)
        physics = pfc.PhysicsParams(visc=1.0, latent=1.0, coupling=1.0)
        phi0 = 0.2 * np.cos(np.pi * x)
    else:
        raise ValueError(regime)
    init = pfc.InitialData(theta0=0.1 * np.cos(np.pi * x), phi0=phi0)
    cost = pfc.CostSpec(
        w_theta=1.0,
        w_phi=1.0,
        w_theta_final=0.5,
        w_phi_final=0.5,
        theta_target=0.1,
        phi_target=0.0,
        theta_final_target=0.05,
        phi_final_target=0.1,
    )
    return pfc.ProblemSpec(
        grid=grid,
        tgrid=tgrid,
        physics=physics,
        potential=potential,
        init=init,
        cost=cost,
        box=pfc.ControlBox(lower=-1.0, upper=1.0),
    )


@pytest.fixture
def regular_spec() -> pfc.ProblemSpec:
    return desk_spec("regular")


@pytest.fixture
def log_spec() -> pfc.ProblemSpec:
    return desk_spec("log", yosida_eps=1.0e-3)


@pytest.fixture
def exact_log_spec() -> pfc.ProblemSpec:
    return desk_spec("log")


def zero_control(spec: pfc.ProblemSpec) -> np.ndarray:
    return np.zeros((spec.tgrid.steps, spec.grid.ncells))
