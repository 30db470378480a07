"""Control layer: projection, stationarity measure, bang-bang classification,
seeded admissible controls, and the projected-gradient optimizer."""

import dataclasses

import numpy as np
import pytest
from conftest import desk_spec
from hypothesis import given, settings
from hypothesis import strategies as st

import pfcontrol as pfc


def _small_spec(**kw):
    return desk_spec("regular", cells=16, steps=8, **kw)


class TestProjection:
    def test_clamps_nodewise(self):
        box = pfc.ControlBox(lower=-1.0, upper=1.0)
        u = np.array([[-2.0, 0.5, 3.0]])
        assert np.array_equal(pfc.project_box(u, box), [[-1.0, 0.5, 1.0]])

    def test_spatial_bound_arrays(self):
        box = pfc.ControlBox(lower=np.array([0.0, -1.0]), upper=np.array([0.5, 2.0]))
        u = np.array([[1.0, -3.0], [-1.0, 1.5]])
        assert np.array_equal(pfc.project_box(u, box), [[0.5, -1.0], [0.0, 1.5]])

    def test_inverted_box_rejected(self):
        with pytest.raises(pfc.ShapeMismatch):
            pfc.project_box(np.zeros((1, 2)), pfc.ControlBox(lower=1.0, upper=-1.0))

    @settings(max_examples=40, deadline=None)
    @given(
        st.lists(
            st.floats(min_value=-50, max_value=50), min_size=4, max_size=4
        ),
        st.lists(
            st.floats(min_value=-50, max_value=50), min_size=4, max_size=4
        ),
    )
    def test_projection_is_nonexpansive(self, a, b):
        box = pfc.ControlBox(lower=-2.0, upper=3.0)
        pa = pfc.project_box(np.array([a]), box)
        pb = pfc.project_box(np.array([b]), box)
        assert np.all(np.abs(pa - pb) <= np.abs(np.array([a]) - np.array([b])) + 1e-15)


class TestStationarity:
    def test_zero_gradient_is_stationary(self):
        spec = _small_spec()
        u = np.zeros((8, 16))
        assert pfc.stationarity_residual(u, np.zeros_like(u), spec.box, spec) == 0.0

    def test_pinned_face_against_positive_gradient(self):
        spec = _small_spec()
        u = np.full((8, 16), -1.0)
        g = np.full_like(u, 0.3)
        assert pfc.stationarity_residual(u, g, spec.box, spec) == 0.0

    def test_interior_point_measures_gradient_norm(self):
        spec = _small_spec()
        u = np.zeros((8, 16))
        rng = np.random.default_rng(0)
        g = 0.1 * rng.uniform(-1.0, 1.0, u.shape)
        res = pfc.stationarity_residual(u, g, spec.box, spec)
        assert res == pytest.approx(pfc.lq_norm(g, spec), rel=1e-14)


class TestBangBang:
    def test_consistent_partition(self):
        box = pfc.ControlBox(lower=-1.0, upper=1.0)
        q = np.array([[2.0, -2.0, 0.0, 1.0]])
        u = np.array([[-1.0, 1.0, 0.2, -1.0]])
        rep = pfc.bang_bang_classify(u, q, box)
        assert rep.frac_lower_consistent == 1.0
        assert rep.frac_upper_consistent == 1.0
        assert rep.n_positive == 2 and rep.n_negative == 1 and rep.n_neutral == 1
        assert rep.frac_at_lower == 0.5
        assert rep.frac_interior == 0.25

    def test_interior_node_breaks_consistency(self):
        box = pfc.ControlBox()
        q = np.array([[1.0, 1.0]])
        u = np.array([[-1.0, 0.0]])
        rep = pfc.bang_bang_classify(u, q, box)
        assert rep.frac_lower_consistent == 0.5

    def test_tol_override(self):
        box = pfc.ControlBox()
        q = np.array([[0.5, -0.5]])
        u = np.array([[0.0, 0.0]])
        rep = pfc.bang_bang_classify(u, q, box, tol=1.0)
        assert rep.n_neutral == 2
        assert rep.frac_lower_consistent == 1.0

    def test_shape_mismatch(self):
        with pytest.raises(pfc.ShapeMismatch):
            pfc.bang_bang_classify(np.zeros((1, 2)), np.zeros((2, 1)), pfc.ControlBox())


class TestRandomControl:
    def test_inside_box_and_deterministic(self):
        spec = _small_spec()
        u1 = pfc.random_admissible_control(spec, 42)
        u2 = pfc.random_admissible_control(spec, 42)
        u3 = pfc.random_admissible_control(spec, 43)
        lo, hi = spec.box.resolve(spec.grid, spec.tgrid)
        assert np.all(u1 >= lo) and np.all(u1 <= hi)
        assert np.array_equal(u1, u2)
        assert not np.array_equal(u1, u3)

    def test_respects_tight_box(self):
        spec = _small_spec()
        spec = dataclasses.replace(spec, box=pfc.ControlBox(lower=0.2, upper=0.3))
        u = pfc.random_admissible_control(spec, 7)
        assert np.all(u >= 0.2) and np.all(u <= 0.3)


class TestOptimize:
    def test_zero_cost_terminates_immediately(self):
        spec = dataclasses.replace(_small_spec(), cost=pfc.CostSpec())
        report = pfc.optimize(spec)
        assert report.termination == "stationary"
        assert report.iterations == 0
        assert report.j_final == 0.0
        assert report.residual_final == 0.0
        assert report.bang_bang.frac_lower_consistent == 1.0

    def test_descent_run_bookkeeping(self):
        spec = _small_spec()
        opts = pfc.OptimizeOptions(stat_tol=1.0e-10, max_iter=15)
        report = pfc.optimize(spec, opts=opts)
        assert report.termination == "max_iterations"
        assert report.iterations == 15
        j = np.array(report.j_history)
        assert np.all(np.diff(j) <= 0.0)
        assert len(report.residual_history) == len(j)
        assert len(report.step_history) == len(j) - 1
        assert len(report.du_norm_history) == len(j) - 1
        # Audit the accepted-step sufficient decrease from the report alone.
        sigma = opts.armijo_sigma
        for k, (s, dn) in enumerate(zip(report.step_history, report.du_norm_history)):
            assert j[k + 1] <= j[k] - (sigma / s) * dn**2 + 1.0e-15 * (1.0 + abs(j[k]))
        lo, hi = spec.box.resolve(spec.grid, spec.tgrid)
        assert np.all(report.u_opt >= lo) and np.all(report.u_opt <= hi)

    def test_reaches_stationarity_at_loose_tol(self):
        spec = _small_spec()
        opts = pfc.OptimizeOptions(stat_tol=1.0e-4, max_iter=400)
        report = pfc.optimize(spec, opts=opts)
        assert report.termination == "stationary"
        assert report.residual_final <= 1.0e-4
        # Cross-check the reported residual independently.
        grad = pfc.reduced_gradient(report.u_opt, spec)
        res = pfc.stationarity_residual(report.u_opt, grad, spec.box, spec)
        assert res == pytest.approx(report.residual_final, rel=1e-10)

    def test_fd_check_report(self):
        spec = _small_spec()
        opts = pfc.OptimizeOptions(stat_tol=1.0e-10, max_iter=3, fd_check=True)
        report = pfc.optimize(spec, opts=opts)
        assert report.fd_check is not None
        assert report.fd_check["rel_error"] <= 1.0e-6

    def test_multistart_keeps_best(self):
        spec = _small_spec()
        opts = pfc.OptimizeOptions(stat_tol=1.0e-12, max_iter=4, starts=(1,))
        single = pfc.optimize(spec, opts=dataclasses.replace(opts, starts=()))
        multi = pfc.optimize(spec, opts=opts)
        assert multi.j_final <= single.j_final
        assert multi.start_seed in (None, 1)

    def test_control_hypotheses_enforced(self):
        spec = _small_spec()
        decoupled = dataclasses.replace(
            spec, physics=pfc.PhysicsParams(visc=0.0, latent=0.0, coupling=1.0)
        )
        with pytest.raises(pfc.ValidationError) as err:
            pfc.optimize(decoupled)
        assert any("latent" in v for v in err.value.violations)

    def test_initial_guess_shape_checked(self):
        spec = _small_spec()
        with pytest.raises(pfc.ShapeMismatch):
            pfc.optimize(spec, u0=np.zeros((3, 3)))

    def test_initial_guess_projected_first(self):
        spec = dataclasses.replace(_small_spec(), cost=pfc.CostSpec())
        u0 = np.full((8, 16), 5.0)
        report = pfc.optimize(spec, u0=u0)
        assert np.all(report.u_opt <= 1.0)
