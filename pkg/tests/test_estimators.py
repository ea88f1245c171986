"""Indicator values, threshold fitting, and marking semantics."""

from dataclasses import replace

import numpy as np
import pytest

from stflow import assembly as A
from stflow import estimators as E
from stflow import mesh as M
from stflow import physics as P
from stflow import solver as S
from stflow.physics import OIL, WATER
from test_solver import small_problem


def uniform_model(nx, ny, ls_max, perm=100.0, phi=0.2, c_f=(3.0e-6, 1.0e-4)):
    kx = [np.full((nx << l, ny << l), perm) for l in range(ls_max + 1)]
    ky = [np.full((nx << l, ny << l), perm) for l in range(ls_max + 1)]
    ph = [np.full((nx << l, ny << l), phi) for l in range(ls_max + 1)]
    return P.FluidRockModel(
        fluid=P.FluidProps(c_f=c_f),
        bc=P.BrooksCoreyParams(),
        rock=P.RockField(kx=kx, ky=ky, phi=ph),
    )


class TestClosedForms:
    def test_hand_temporal_value(self):
        # V=1, dt=3, K=1, |du|=2: sqrt(1 * 4 * 3/3) = 2, exactly
        assert E.temporal_flux_indicator(1.0, 3.0, 1.0, 1.0, 2.0, 0.0) == 2.0

    def test_spatial_form(self):
        got = E.spatial_flux_indicator(2.0, 5.0, 0.5, 0.25, 1.0, 2.0)
        assert got == pytest.approx(np.sqrt(2.0 * 5.0 * (0.5 + 1.0)), rel=1e-15)

    def test_zero_perm_weight_drops_component(self):
        # inv_k = 0 encodes an impermeable direction; it cannot contribute
        assert E.temporal_flux_indicator(1.0, 3.0, 0.0, 1.0, 9.0, 0.0) == 0.0


class TestThresholdFit:
    def test_two_point_log_mean(self):
        fit = E.fit_thresholds(np.array([0.01, 1.0]))
        assert fit.mu_log == -1.0
        assert fit.theta_mean == 0.1

    def test_equal_values_zero_spread(self):
        fit = E.fit_thresholds(np.full(5, 0.5))
        assert fit.sigma_log == 0.0
        assert fit.theta_mean == pytest.approx(0.5, rel=1e-15)
        assert fit.theta_hi == fit.theta_mean

    def test_sentinel_on_empty_window(self):
        fit = E.fit_thresholds(np.array([0.001, 0.009, 0.0]))
        assert (fit.theta_mean, fit.theta_hi) == (1.0, 1.0)

    def test_sentinel_on_single_survivor(self):
        fit = E.fit_thresholds(np.array([0.5, 0.001]))
        assert (fit.theta_mean, fit.theta_hi) == (1.0, 1.0)
        assert fit.n_window == 1

    def test_bounds(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            v = rng.uniform(0.0, 1.0, 50)
            v[rng.integers(0, 50)] = 1.0
            fit = E.fit_thresholds(v)
            assert 0.01 <= fit.theta_mean <= 1.0
            assert fit.theta_hi >= fit.theta_mean


def steady_single_phase_step2():
    """Two coarse steps of incompressible water-only flow; the second step
    starts from the restriction of the first and is warm started from its
    end state, so every flux is constant in time up to solver noise."""
    g = M.CoarseGrid(nx=3, ny=3, dx0=10.0, dy0=10.0, dt0=5.0)
    model = uniform_model(3, 3, 0, perm=10.0, c_f=(0.0, 0.0))
    wells = (
        A.Well(kind="injector", x=5.0, y=5.0, rate=0.1),
        A.Well(kind="producer", x=25.0, y=25.0, p_bhp=1000.0),
    )
    p0 = np.full((3, 3), 1000.0)
    s0 = np.ones((3, 3))

    def build(grid, p_c, s_c):
        mesh = M.build_coarse(grid, 0, 1)
        mesh = mesh.refine_temporal([mesh.elements[0].key]).smooth()
        return mesh, A.AssemblyPlan(mesh, model, wells, p_c, s_c)

    mesh1, plan1 = build(g, p0, s0)
    x0 = np.concatenate([plan1.p_start, plan1.s_start, np.zeros(2 * plan1.n_f)])
    x1, _ = S.newton_solve(plan1, x0, tol_rel=1e-12, tol_abs=1e-11, max_iter=30)
    pe, se, uo, uw = plan1.split(x1)
    st1 = M.State(mesh1, p=pe, s=se, u_w=uw, u_o=uo)
    p1, s1 = M.restrict_to_coarse(mesh1, st1, model)
    g2 = replace(g, step_index=1, t_start=5.0)
    mesh2, plan2 = build(g2, p1, s1)
    x2, _ = S.newton_solve(plan2, x1.copy(), tol_rel=1e-12, tol_abs=1e-11, max_iter=30)
    return mesh2, plan2, x2


class TestSteadySinglePhase:
    def test_temporal_indicators_vanish(self):
        _, plan, x = steady_single_phase_step2()
        ind = E.compute_estimators(plan, x)
        assert float(np.abs(ind.eta_t_f).max()) <= 1e-12
        assert float(np.abs(ind.eta_t_p).max()) <= 1e-12

    def test_all_nonnegative(self):
        _, plan, x = steady_single_phase_step2()
        ind = E.compute_estimators(plan, x)
        for name in E.INDICATOR_NAMES:
            assert np.all(getattr(ind, name) >= 0.0)


@pytest.fixture(scope="module")
def solved():
    plan, x0 = small_problem()
    x, _ = S.newton_solve(plan, x0, tol_rel=1e-10, tol_abs=1e-12, max_iter=40)
    return plan, x


class TestConvergedTwoPhase:
    def test_residual_pair_within_newton_footprint(self, solved):
        plan, x = solved
        ind = E.compute_estimators(plan, x)
        assert float(ind.eta_t_r.max()) < 1e-6
        assert float(ind.eta_s_r.max()) < 1e-6

    def test_nonnegative_and_normalized(self, solved):
        plan, x = solved
        ind = E.compute_estimators(plan, x)
        ind.eps_t, ind.eps_s = E.saturation_gradients(plan, x)
        for name in E.INDICATOR_NAMES + ("eps_t", "eps_s"):
            raw = getattr(ind, name)
            assert np.all(raw >= 0.0)
            v = ind.normalized(name)
            assert np.all(v >= 0.0) and np.all(v <= 1.0)
            if np.any(raw > 0.0):
                assert float(v.max()) == 1.0

    def test_marking_runs_and_respects_caps(self, solved):
        plan, x = solved
        ind = E.compute_estimators(plan, x)
        ind.eps_t, ind.eps_s = E.saturation_gradients(plan, x)
        fit_tf = E.fit_thresholds(ind.normalized("eta_t_f"))
        fit_te = E.fit_thresholds(ind.normalized("eps_t"))
        fit_sf = E.fit_thresholds(ind.normalized("eta_s_f"))
        fit_se = E.fit_thresholds(ind.normalized("eps_s"))
        mesh = plan.mesh
        for key in E.mark_temporal(ind, fit_tf, fit_te):
            assert mesh.elements[mesh.element_index[key]].level_t < mesh.lt_max
        for key in E.mark_spatial(ind, fit_sf, fit_se, plan.wells):
            assert mesh.elements[mesh.element_index[key]].level_s < mesh.ls_max


class TestUniformFlowJumps:
    def test_spatial_pair_vanishes_on_uniform_gradient(self):
        # a linear-in-x pressure field on a matching mesh produces the same
        # flux density on every x-face and none on y-faces: no tangential
        # jumps and no upwind/local mobility gap (S_w uniform)
        g = M.CoarseGrid(nx=4, ny=3, dx0=10.0, dy0=10.0, dt0=5.0)
        mesh = M.build_coarse(g, 0, 0)
        model = uniform_model(4, 3, 0)
        p0 = np.full((4, 3), 1000.0)
        s0 = np.full((4, 3), 0.5)
        plan = A.AssemblyPlan(mesh, model, (), p0, s0)
        p = np.fromiter((1000.0 + 2.0 * e.cx for e in mesh.elements), float)
        s = np.full(plan.n_el, 0.5)
        ut_o, ut_w = A.constitutive_fluxes(plan, p, s)
        x = np.concatenate([p, s, ut_o, ut_w])
        ind = E.compute_estimators(plan, x)
        assert float(np.abs(ind.eta_s_p).max()) == 0.0
        assert float(np.abs(ind.eta_s_f).max()) == 0.0


class TestSaturationGradients:
    def test_temporal_rate_hand_value(self):
        g = M.CoarseGrid(nx=1, ny=1, dx0=10.0, dy0=10.0, dt0=10.0)
        mesh = M.build_coarse(g, 0, 0)
        model = uniform_model(1, 1, 0)
        plan = A.AssemblyPlan(mesh, model, (), np.full((1, 1), 1000.0), np.full((1, 1), 0.2))
        x = np.array([1000.0, 0.5])
        eps_t, eps_s = E.saturation_gradients(plan, x)
        assert eps_t[0] == pytest.approx(0.03, rel=1e-14)
        assert eps_s[0] == 0.0

    def test_uniform_saturation_gives_zero(self):
        plan, x0 = small_problem()
        eps_t, eps_s = E.saturation_gradients(plan, x0)
        assert np.all(eps_t == 0.0)
        assert np.all(eps_s == 0.0)

    def test_two_branch_combination(self):
        assert E.combine_gradient(0.1, 0.3) == pytest.approx(0.2, rel=1e-15)
        assert E.combine_gradient(0.3, 0.1) == 0.3
        assert E.combine_gradient(0.2, 0.2) == pytest.approx(0.2, rel=1e-15)

    def test_previous_step_raster_branch(self):
        g = M.CoarseGrid(nx=2, ny=1, dx0=10.0, dy0=10.0, dt0=5.0)
        model = uniform_model(2, 1, 1)
        mesh_prev = M.build_coarse(g, 1, 0)
        st_prev = M.State(
            mesh_prev,
            p=np.full(2, 1000.0),
            s=np.array([0.2, 0.4]),
            u_w=np.zeros(1),
            u_o=np.zeros(1),
        )
        # one face, center distance 10 ft: the previous gradient is 0.02
        # everywhere once painted on the raster
        g2 = replace(g, step_index=1, t_start=5.0)
        mesh = M.build_coarse(g2, 1, 0).refine_spatial([(0, 0, 0, 0, 0)]).smooth()
        plan = A.AssemblyPlan(
            mesh, model, (), np.full((2, 1), 1000.0), np.full((2, 1), 0.3)
        )
        n, m = plan.n_el, plan.n_f
        x = np.concatenate([np.full(n, 1000.0), np.full(n, 0.3), np.zeros(2 * m)])
        eps_t, eps_s = E.saturation_gradients(plan, x, st_prev)
        # current gradient 0, previous 0.02: averaging branch, 0.01
        assert eps_s == pytest.approx(np.full(n, 0.01), rel=1e-14)

    def test_first_step_uses_current_only(self):
        plan, _ = small_problem()
        n, m = plan.n_el, plan.n_f
        s = np.fromiter((0.2 + 0.004 * e.cx for e in plan.mesh.elements), float)
        x = np.concatenate([np.full(n, 1000.0), s, np.zeros(2 * m)])
        _, eps_s = E.saturation_gradients(plan, x)
        g_cur = E.spatial_saturation_gradient(plan.mesh, s)
        assert np.array_equal(eps_s, g_cur)
        assert float(eps_s.max()) > 0.0


def crafted_indicators():
    g = M.CoarseGrid(nx=2, ny=2, dx0=10.0, dy0=10.0, dt0=5.0)
    mesh = M.build_coarse(g, 1, 1)
    n = mesh.n_elements
    zeros = lambda: np.zeros((n, 2))
    ind = E.IndicatorField(mesh, zeros(), zeros(), zeros(), zeros(), zeros(), zeros())
    ind.eps_t = np.zeros(n)
    ind.eps_s = np.zeros(n)
    return mesh, ind


class TestMarking:
    def test_temporal_requires_both(self):
        mesh, ind = crafted_indicators()
        ind.eta_t_f[:, WATER] = [1.0, 0.6, 0.4, 0.0]
        ind.eps_t[:] = [1.0, 0.4, 0.6, 0.0]
        fit = E.ThresholdFit(0.0, 0.0, 0.5, 0.9, 4)
        marked = E.mark_temporal(ind, fit, fit)
        assert marked == {mesh.elements[0].key}

    def test_spatial_is_a_union(self):
        mesh, ind = crafted_indicators()
        ind.eta_s_f[:, WATER] = [1.0, 0.95, 0.4, 0.0]
        ind.eps_s[:] = [1.0, 0.4, 0.6, 0.0]
        fit_f = E.ThresholdFit(0.0, 0.0, 0.5, 0.9, 4)
        fit_e = E.ThresholdFit(0.0, 0.0, 0.5, 0.9, 4)
        marked = E.mark_spatial(ind, fit_f, fit_e)
        assert marked == {mesh.elements[i].key for i in (0, 1, 2)}

    def test_well_columns_always_marked(self):
        mesh, ind = crafted_indicators()
        fit = E.ThresholdFit(0.0, 0.0, 1.0, 1.0, 0)
        well = A.Well(kind="producer", x=15.0, y=15.0, p_bhp=1000.0)
        marked = E.mark_spatial(ind, fit, fit, (well,))
        col = mesh.column_at_point(15.0, 15.0)
        expect = {mesh.elements[i].key for i in mesh.elements_of_column(col)}
        assert marked == expect

    def test_caps_exclude_elements(self):
        g = M.CoarseGrid(nx=2, ny=2, dx0=10.0, dy0=10.0, dt0=5.0)
        mesh = M.build_coarse(g, 0, 0)  # already at both caps
        n = mesh.n_elements
        ones = np.ones((n, 2))
        ind = E.IndicatorField(mesh, ones, ones, ones, ones, ones, ones)
        ind.eps_t = np.ones(n)
        ind.eps_s = np.ones(n)
        fit = E.ThresholdFit(0.0, 0.0, 0.1, 0.1, 4)
        assert E.mark_temporal(ind, fit, fit) == set()
        well = A.Well(kind="injector", x=5.0, y=5.0, rate=1.0)
        assert E.mark_spatial(ind, fit, fit, (well,)) == set()

    def test_marking_is_monotone(self):
        mesh, ind = crafted_indicators()
        ind.eta_t_f[:, WATER] = [1.0, 0.6, 0.55, 0.0]
        ind.eps_t[:] = [1.0, 0.7, 0.6, 0.0]
        fit = E.ThresholdFit(0.0, 0.0, 0.5, 0.9, 4)
        before = E.mark_temporal(ind, fit, fit)
        ind.eta_t_f[2, WATER] = 0.9  # raise one element, same max
        after = E.mark_temporal(ind, fit, fit)
        assert before <= after

    def test_zero_indicators_mark_nothing(self):
        _, ind = crafted_indicators()
        v = ind.normalized("eta_t_f")
        fit = E.fit_thresholds(v)
        assert E.mark_temporal(ind, fit, fit) == set()

    def test_residual_region_subset_of_markable(self):
        plan, x0 = small_problem()
        rng = np.random.default_rng(11)
        x = x0.copy()
        x[:plan.n_el] += rng.uniform(0.0, 10.0, plan.n_el)
        ind = E.compute_estimators(plan, x)
        region = E.mark_residual_region(ind)
        assert region
        mesh = plan.mesh
        for key in region:
            assert mesh.elements[mesh.element_index[key]].level_t < mesh.lt_max
