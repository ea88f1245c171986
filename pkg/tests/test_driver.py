"""Step loop behavior: pass structure, modes, mass accounting."""

import dataclasses

import numpy as np
import pytest

import stflow.config as C
import stflow.driver as D
import stflow.io_out as IO
from stflow.errors import SolverError


def quick_cfg(**over) -> C.RunConfig:
    base = dict(
        nx=4, ny=4, dx=10.0, dy=10.0,
        levels_space=1, levels_time=1,
        dt=5.0, n_steps=2,
        kind="gaussian", seed=3,
        injector_x=5.0, injector_y=5.0, injector_rate=0.3,
        producer_x=35.0, producer_y=35.0, producer_bhp=1000.0,
        newton_max_iter=60,  # cold starts on fine meshes form the front slowly
        write_vtk=False,
    )
    base.update(over)
    return C.RunConfig(**base).validate()


def one_step(cfg, p0=None, s0=None, prev=None):
    model = IO.build_model(cfg)
    wells = cfg.wells()
    if p0 is None:
        p0, s0 = D.initial_fields(cfg)
    return D.advance_step(p0, s0, model, wells, cfg, prev_step_state=prev)


class TestPassStructure:
    def test_homogeneous_no_wells_is_one_solve_per_step(self):
        cfg = quick_cfg(kind="uniform", injector=False, producer=False, n_steps=3)
        series, report = D.run_simulation(cfg)
        assert report.passes_total == 3
        assert report.elements_per_pass == [16, 16, 16]
        assert report.newton_total == 0  # uniform rest state satisfies the system

    def test_pass_count_bound_and_ordering(self):
        cfg = quick_cfg(levels_space=2, levels_time=2)
        _, _, rec = one_step(cfg)
        assert rec.n_passes <= 1 + cfg.levels_time + cfg.levels_space
        kinds = [p.kind for p in rec.passes]
        assert kinds[0] == "initial"
        in_spatial = False
        for k in kinds[1:]:
            assert k in ("temporal", "spatial")
            if k == "spatial":
                in_spatial = True
            else:
                assert not in_spatial, "temporal pass after the spatial phase began"

    def test_zero_levels_reduce_to_plain_stepping(self):
        cfg = quick_cfg(levels_space=0, levels_time=0, n_steps=3)
        series, report = D.run_simulation(cfg)
        assert report.passes_total == 3
        assert set(report.elements_per_pass) == {16}

    def test_well_columns_reach_the_spatial_cap(self):
        cfg = quick_cfg(levels_space=2, levels_time=1)
        state, _, _ = one_step(cfg)
        for x, y in ((cfg.injector_x, cfg.injector_y), (cfg.producer_x, cfg.producer_y)):
            level_s, _, _ = state.mesh.column_at_point(x, y)
            assert level_s == cfg.levels_space

    def test_verbose_keeps_indicator_fields(self):
        cfg = quick_cfg(verbose_indicators=True)
        _, _, rec = one_step(cfg)
        assert rec.passes[0].indicators is not None

    def test_newton_failure_aborts_with_pass_log(self):
        cfg = quick_cfg(newton_max_iter=1, injector_rate=3.0, dt=20.0)
        with pytest.raises(SolverError) as err:
            D.run_simulation(cfg)
        assert isinstance(err.value, D.StepFailure)
        assert err.value.record.passes
        assert "initial" in str(err.value)


class TestModes:
    def test_fine_mode_solves_the_uniform_finest_mesh_once(self):
        cfg = quick_cfg(mode="fine", n_steps=2)
        series, report = D.run_simulation(cfg)
        finest = (4 << 1) * (4 << 1) * (1 << 1)
        # warm-started fine mode seeds each step with a coarse solve
        assert report.passes_total == 4
        assert report.elements_per_pass == [16, finest, 16, finest]
        for rec in report.records:
            assert [p.kind for p in rec.passes] == ["seed", "initial"]

    def test_fine_mode_without_warm_start_skips_the_seed_pass(self):
        cfg = quick_cfg(mode="fine", n_steps=1, warm_start=False,
                        newton_max_iter=90)
        series, report = D.run_simulation(cfg)
        finest = (4 << 1) * (4 << 1) * (1 << 1)
        assert report.elements_per_pass == [finest]

    def test_coarse_mode_stays_on_the_coarse_mesh(self):
        cfg = quick_cfg(mode="coarse", n_steps=2)
        series, report = D.run_simulation(cfg)
        assert report.elements_per_pass == [16, 16]

    def test_every_mode_returns_coarse_fields_for_the_next_step(self):
        for mode in C.MODES:
            cfg = quick_cfg(mode=mode, n_steps=1)
            series, _ = D.run_simulation(cfg)
            p, s = series.final_coarse
            assert p.shape == (4, 4) and s.shape == (4, 4)
            assert np.all(np.isfinite(p))
            assert np.all((s >= 0.0) & (s <= 1.0))

    def test_mark_all_matches_fine_mode(self):
        tol = dict(newton_tol_rel=1e-10, newton_tol_abs=1e-11, newton_max_iter=80)
        adaptive = quick_cfg(mark_all=True, n_steps=3, **tol)
        fine = quick_cfg(mode="fine", n_steps=3, **tol)
        sa, ra = D.run_simulation(adaptive)
        sf, rf = D.run_simulation(fine)
        pa, swa = sa.final_coarse
        pf, swf = sf.final_coarse
        assert np.linalg.norm(pa - pf) / np.linalg.norm(pf) < 1e-8
        assert np.linalg.norm(swa - swf) / np.linalg.norm(swf) < 1e-8
        # mark-everything burns the full pass budget on every step
        assert ra.passes_total == 3 * (1 + 1 + 1)


class TestMassAccounting:
    def test_cumulative_injection_is_rate_times_time(self):
        cfg = quick_cfg(n_steps=4)
        series, _ = D.run_simulation(cfg)
        injected_volume = series.injected_water.sum() / 64.0
        expected = cfg.injector_rate * cfg.n_steps * cfg.dt
        assert injected_volume == pytest.approx(expected, rel=1e-12)

    def test_step_balance_is_tight(self):
        cfg = quick_cfg(n_steps=5)
        _, report = D.run_simulation(cfg)
        assert report.conservation_oil < 1e-10
        assert report.conservation_water < 1e-10

    def test_conservation_error_definition(self):
        rec = D.StepRecord(index=0, t_start=0.0, t_end=1.0)
        rec.start_mass = (10.0, 20.0)
        rec.end_mass = (9.0, 24.0)
        rec.produced_mass = (1.0, 0.5)
        rec.injected_water = 5.0
        err_o, err_w = D.conservation_error([rec])
        assert err_o == pytest.approx(0.0, abs=1e-15)
        assert err_w == pytest.approx(0.5 / 5.0, rel=1e-12)

    def test_no_injection_returns_absolute_defects(self):
        rec = D.StepRecord(index=0, t_start=0.0, t_end=1.0)
        rec.start_mass = (1.0, 1.0)
        rec.end_mass = (1.5, 1.0)
        err_o, err_w = D.conservation_error([rec])
        assert err_o == pytest.approx(0.5)
        assert err_w == 0.0

    def test_rates_are_mass_over_density_and_step(self):
        cfg = quick_cfg(n_steps=2, producer_bhp=900.0)
        series, _ = D.run_simulation(cfg)
        assert np.allclose(series.rate_water, series.produced_water / (64.0 * cfg.dt))
        assert np.allclose(series.rate_oil, series.produced_oil / (53.0 * cfg.dt))
        assert np.all(series.rate_oil >= 0.0)


class TestRunShape:
    def test_zero_steps_is_a_valid_empty_run(self):
        cfg = quick_cfg(n_steps=0)
        series, report = D.run_simulation(cfg)
        assert series.n_steps == 0
        assert series.final_state is None
        assert series.final_coarse is None
        assert report.passes_total == 0
        assert report.total_seconds >= 0.0

    def test_component_times_bounded_by_total(self):
        cfg = quick_cfg(n_steps=2)
        _, report = D.run_simulation(cfg)
        parts = report.setup_seconds + report.linear_seconds + report.data_seconds
        assert parts <= report.total_seconds

    def test_states_kept_only_on_request(self):
        cfg = quick_cfg(n_steps=2)
        series, _ = D.run_simulation(cfg, keep_states=True)
        assert len(series.states) == 2
        series, _ = D.run_simulation(cfg, keep_states=False)
        assert series.states == []
        assert series.final_state is not None

    def test_warm_start_does_not_cost_more_newton_iterations(self):
        warm = quick_cfg(n_steps=3, levels_space=2, levels_time=2, seed=5)
        cold = dataclasses.replace(warm, warm_start=False)
        _, rw = D.run_simulation(warm)
        _, rc = D.run_simulation(cold)
        assert rw.newton_total <= rc.newton_total

    def test_report_records_match_step_count(self):
        cfg = quick_cfg(n_steps=3)
        _, report = D.run_simulation(cfg)
        assert len(report.records) == 3
        assert report.newton_total == sum(r.newton_total for r in report.records)
