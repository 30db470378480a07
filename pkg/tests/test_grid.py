"""Spatial operators: stencils, conservation, inverse Neumann, norms."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import pfcontrol as pfc
from pfcontrol.errors import NonZeroMean, ShapeMismatch


def test_interior_stencil_unit_spacing():
    grid = pfc.Grid(3, 3.0)
    assert grid.spacing == (1.0,)
    out = grid.apply_laplacian(np.array([0.0, 1.0, 0.0]))
    np.testing.assert_allclose(out, [1.0, -2.0, 1.0])


def test_boundary_stencil_is_zero_flux():
    grid = pfc.Grid(3, 3.0)
    out = grid.apply_laplacian(np.array([1.0, 0.0, 0.0]))
    np.testing.assert_allclose(out, [-1.0, 1.0, 0.0])


def test_mean_is_arithmetic_average():
    grid = pfc.Grid(2)
    assert grid.mean(np.array([1.0, 3.0])) == 2.0


def test_laplacian_annihilates_constants_to_rounding():
    for grid in (pfc.Grid(17, 0.7), pfc.Grid((12, 9), (1.3, 0.4))):
        out = grid.apply_laplacian(np.ones(grid.ncells))
        bound = 8 * np.finfo(float).eps / min(grid.spacing) ** 2
        assert np.max(np.abs(out)) <= bound


def test_laplacian_row_and_column_sums_vanish():
    grid = pfc.Grid((8, 5))
    lap = grid.laplacian
    bound = 8 * np.finfo(float).eps / min(grid.spacing) ** 2
    assert np.max(np.abs(lap @ np.ones(grid.ncells))) <= bound
    assert np.max(np.abs(lap.T @ np.ones(grid.ncells))) <= bound


def test_laplacian_second_order_on_cosine():
    errors = []
    for n in (32, 64):
        grid = pfc.Grid(n)
        x = grid.coords()[:, 0]
        f = np.cos(np.pi * x)
        exact = -np.pi**2 * f
        errors.append(np.max(np.abs(grid.apply_laplacian(f) - exact)))
    ratio = errors[0] / errors[1]
    assert 3.5 <= ratio <= 4.6


def test_inverse_neumann_round_trip_and_mean():
    grid = pfc.Grid(64)
    rng = np.random.default_rng(1)
    f = rng.standard_normal(grid.ncells)
    f -= f.mean()
    g = grid.inverse_neumann(f)
    assert abs(grid.mean(g)) <= 1e-13 * np.max(np.abs(g))
    back = -grid.apply_laplacian(g)
    assert np.linalg.norm(back - f) <= 1e-10 * np.linalg.norm(f)


def test_inverse_neumann_symmetric():
    grid = pfc.Grid((16, 16))
    rng = np.random.default_rng(2)
    f = rng.standard_normal(grid.ncells)
    g = rng.standard_normal(grid.ncells)
    f -= f.mean()
    g -= g.mean()
    lhs = grid.inner(f, grid.inverse_neumann(g))
    rhs = grid.inner(grid.inverse_neumann(f), g)
    scale = max(abs(lhs), abs(rhs), 1.0)
    assert abs(lhs - rhs) <= 1e-12 * scale


def test_inverse_neumann_rejects_nonzero_mean():
    grid = pfc.Grid(8)
    with pytest.raises(NonZeroMean):
        grid.inverse_neumann(np.ones(8))


def test_dual_norm_against_analytic_cosine():
    # -Lap g = cos(pi x) has g = cos(pi x)/pi^2, so the dual norm is
    # sqrt(1/2)/pi up to the O(h^2) consistency error.
    grid = pfc.Grid(128)
    x = grid.coords()[:, 0]
    value = grid.dual_norm(np.cos(np.pi * x))
    assert value == pytest.approx(np.sqrt(0.5) / np.pi, rel=2e-3)


def test_vprime_norm_of_constant():
    grid = pfc.Grid(13, 2.0)
    value = grid.vprime_norm(np.full(grid.ncells, 3.0))
    assert value == pytest.approx(3.0 * np.sqrt(2.0), rel=1e-12)


def test_v_norm_and_grad_sq():
    grid = pfc.Grid(10, 1.0)
    const = np.full(grid.ncells, 2.0)
    assert grid.grad_sq(const) == 0.0
    assert grid.v_norm(const) == pytest.approx(2.0, rel=1e-12)
    x = grid.coords()[:, 0]
    # Piecewise-linear field: every interior face difference is h.
    n, h = grid.cells[0], grid.spacing[0]
    assert grid.grad_sq(x) == pytest.approx((n - 1) * h, rel=1e-12)


def test_h_norm_of_cosine():
    grid = pfc.Grid(256)
    x = grid.coords()[:, 0]
    assert grid.h_norm(np.cos(np.pi * x)) == pytest.approx(np.sqrt(0.5), rel=1e-4)


def test_norms_reflection_invariant_1d():
    grid = pfc.Grid(32)
    rng = np.random.default_rng(3)
    f = rng.standard_normal(32)
    f -= f.mean()
    r = f[::-1].copy()
    assert grid.h_norm(r) == pytest.approx(grid.h_norm(f), rel=1e-13)
    assert grid.v_norm(r) == pytest.approx(grid.v_norm(f), rel=1e-13)
    assert grid.dual_norm(r) == pytest.approx(grid.dual_norm(f), rel=1e-11)


@settings(max_examples=25, deadline=None)
@given(st.floats(min_value=-100.0, max_value=100.0, allow_nan=False))
def test_dual_norm_homogeneous(c):
    grid = pfc.Grid(16)
    rng = np.random.default_rng(4)
    f = rng.standard_normal(16)
    f -= f.mean()
    assert grid.dual_norm(c * f) == pytest.approx(
        abs(c) * grid.dual_norm(f), rel=1e-9, abs=1e-12
    )


def test_helmholtz_solve_identity_at_zero_and_consistency():
    grid = pfc.Grid(24)
    rng = np.random.default_rng(5)
    f = rng.standard_normal(24)
    np.testing.assert_array_equal(grid.helmholtz_solve(f, 0.0), f)
    w = grid.helmholtz_solve(f, 0.3)
    np.testing.assert_allclose(w - 0.3 * grid.apply_laplacian(w), f, rtol=0, atol=1e-10)


def test_2d_laplacian_consistent_with_1d():
    grid2 = pfc.Grid((16, 4), (1.0, 1.0))
    grid1 = pfc.Grid(16)
    x = grid1.coords()[:, 0]
    f1 = np.cos(np.pi * x)
    f2 = np.repeat(f1, 4)
    out2 = grid2.apply_laplacian(f2).reshape(16, 4)
    out1 = grid1.apply_laplacian(f1)
    np.testing.assert_allclose(out2, np.tile(out1[:, None], (1, 4)), atol=1e-9)


def test_shape_guard():
    grid = pfc.Grid(8)
    with pytest.raises(ShapeMismatch):
        grid.mean(np.ones(7))


def test_grid_construction_errors():
    with pytest.raises(ValueError):
        pfc.Grid(1)
    with pytest.raises(ValueError):
        pfc.Grid((4, 4, 4))
    with pytest.raises(ValueError):
        pfc.Grid(8, -1.0)


def test_field_immutable_and_checked():
    grid = pfc.Grid(4)
    f = pfc.Field.constant(grid, 2.0)
    with pytest.raises(ValueError):
        f.values[0] = 3.0
    with pytest.raises(ShapeMismatch):
        pfc.Field(grid, np.ones(5))
    with pytest.raises(ValueError):
        pfc.Field(grid, np.array([1.0, np.nan, 0.0, 0.0]))
    g = pfc.Field.from_function(grid, lambda x: x**2)
    assert g.values[0] == pytest.approx(grid.axis_centers()[0][0] ** 2)


def test_field_wrappers():
    grid = pfc.Grid(32)
    x = grid.coords()[:, 0]
    f = pfc.Field(grid, np.cos(np.pi * x))
    assert pfc.mean(f) == pytest.approx(0.0, abs=1e-14)
    lap = pfc.laplacian_neumann(f)
    assert lap.grid is grid
    back = pfc.inverse_neumann(lap)
    np.testing.assert_allclose(-back.values, f.values - pfc.mean(f), atol=1e-8)
    ns = pfc.norms(f)
    assert ns.sup == pytest.approx(np.max(np.abs(f.values)))
    assert pfc.dual_norm(f) > 0


def test_time_grid():
    tg = pfc.TimeGrid(2.0, 8)
    assert tg.dt == 0.25
    times = tg.times()
    assert times[0] == 0.0 and times[-1] == 2.0 and len(times) == 9
    with pytest.raises(ValueError):
        pfc.TimeGrid(0.0, 4)
    with pytest.raises(ValueError):
        pfc.TimeGrid(1.0, 0)
