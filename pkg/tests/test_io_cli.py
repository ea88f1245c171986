"""Field files, synthetic fields, exporters and the command-line front end."""

import os

import numpy as np
import pytest

import stflow.cli as cli
import stflow.config as C
import stflow.driver as D
import stflow.io_out as IO
import stflow.mesh as M
from stflow.errors import ConfigError


class TestFieldFiles:
    def test_single_cell(self, tmp_path):
        p = tmp_path / "f.txt"
        p.write_text("1 1\n100.0\n")
        field = IO.load_field(str(p))
        assert field.shape == (1, 1)
        assert field[0, 0] == 100.0

    def test_orientation_x_fastest(self, tmp_path):
        p = tmp_path / "f.txt"
        p.write_text("2 1\n1.0 2.0\n")
        field = IO.load_field(str(p))
        assert field[0, 0] == 1.0 and field[1, 0] == 2.0
        p.write_text("1 2\n3.0\n4.0\n")
        field = IO.load_field(str(p))
        assert field[0, 0] == 3.0 and field[0, 1] == 4.0

    def test_count_mismatch(self, tmp_path):
        p = tmp_path / "f.txt"
        p.write_text("2 2\n1.0 2.0 3.0\n")
        with pytest.raises(ConfigError, match="expected 4 values"):
            IO.load_field(str(p))

    def test_non_positive_rejected(self, tmp_path):
        p = tmp_path / "f.txt"
        p.write_text("2 1\n1.0 0.0\n")
        with pytest.raises(ConfigError, match="positive"):
            IO.load_field(str(p))

    def test_bad_header(self, tmp_path):
        p = tmp_path / "f.txt"
        p.write_text("two one\n1.0\n")
        with pytest.raises(ConfigError):
            IO.load_field(str(p))

    def test_write_read_round_trip_is_exact(self, tmp_path):
        field = IO.generate_synthetic_field("gaussian", 11, 6, 4, base=80.0)
        p = tmp_path / "f.txt"
        IO.write_field(str(p), field)
        assert np.array_equal(IO.load_field(str(p)), field)


class TestSyntheticFields:
    def test_deterministic_per_seed(self):
        a = IO.generate_synthetic_field("gaussian", 5, 8, 8)
        b = IO.generate_synthetic_field("gaussian", 5, 8, 8)
        c = IO.generate_synthetic_field("gaussian", 6, 8, 8)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_zero_log_variance_is_homogeneous(self):
        f = IO.generate_synthetic_field("gaussian", 3, 8, 8, base=42.0, log_sigma=0.0)
        assert np.array_equal(f, np.full((8, 8), 42.0))

    def test_gaussian_positive(self):
        f = IO.generate_synthetic_field("gaussian", 1, 16, 16, log_sigma=1.5)
        assert np.all(f > 0.0)

    def test_channel_contrast(self):
        f = IO.generate_synthetic_field("channel", 2, 16, 16, base=1.0, contrast=1000.0)
        assert f.max() / f.min() >= 1000.0

    def test_uniform_kind(self):
        f = IO.generate_synthetic_field("uniform", 0, 3, 5, base=7.0)
        assert np.array_equal(f, np.full((3, 5), 7.0))

    def test_unknown_kind(self):
        with pytest.raises(ConfigError, match="perlin"):
            IO.generate_synthetic_field("perlin", 0, 4, 4)


class TestBuildModel:
    def test_levels_match_config(self):
        cfg = C.RunConfig(nx=4, ny=4, levels_space=2, kind="gaussian", seed=1)
        model = IO.build_model(cfg)
        assert len(model.rock.kx) == 3
        assert model.rock.kx[2].shape == (16, 16)
        assert model.rock.kx[0].shape == (4, 4)

    def test_file_source(self, tmp_path):
        kx = IO.generate_synthetic_field("gaussian", 4, 8, 8)
        phi = np.full((8, 8), 0.25)
        kxp, phip = tmp_path / "kx.txt", tmp_path / "phi.txt"
        IO.write_field(str(kxp), kx)
        IO.write_field(str(phip), phi)
        cfg = C.RunConfig(
            nx=4, ny=4, levels_space=1, source="files",
            kx_file=str(kxp), phi_file=str(phip),
        )
        model = IO.build_model(cfg)
        assert np.array_equal(model.rock.kx[1], kx)
        assert np.array_equal(model.rock.ky[1], kx)
        assert np.array_equal(model.rock.phi[1], phi)

    def test_file_shape_mismatch_is_named(self, tmp_path):
        kxp = tmp_path / "kx.txt"
        IO.write_field(str(kxp), np.full((4, 4), 10.0))
        cfg = C.RunConfig(
            nx=4, ny=4, levels_space=1, source="files",
            kx_file=str(kxp), phi_file=str(kxp),
        )
        with pytest.raises(ConfigError, match="kx_file"):
            IO.build_model(cfg)


def four_cell_state():
    g = M.CoarseGrid(2, 2, 10.0, 10.0, 5.0)
    msh = M.build_coarse(g, 0, 0)
    s = np.array([0.1, 0.2, 0.3, 0.4])
    p = np.array([1000.0, 1001.0, 1002.0, 1003.0])
    return M.State(msh, p=p, s=s)


class TestVtk:
    def test_four_cells_round_trip(self, tmp_path):
        state = four_cell_state()
        path = tmp_path / "snap.vtk"
        IO.write_vtk(str(path), state)
        quads, data = IO.read_vtk(str(path))
        assert quads.shape == (4, 4)
        assert sorted(data) == ["P_o", "S_w", "level_s", "level_t"]
        assert np.all(data["level_s"] == 0.0)
        raster = IO.rasterize(quads, data["S_w"], 2, 2)
        expected = np.empty((2, 2))
        for e in state.mesh.elements:
            expected[e.ci, e.cj] = state.s[e.index]
        assert np.array_equal(raster, expected)

    def test_refined_mesh_rasterizes_to_finest(self, tmp_path):
        g = M.CoarseGrid(2, 2, 10.0, 10.0, 5.0)
        msh = M.build_coarse(g, 1, 1).refine_spatial([(0, 0, 0, 0, 0)]).smooth()
        state = M.State(msh, p=np.full(msh.n_elements, 1000.0),
                        s=np.linspace(0.2, 0.8, msh.n_elements))
        path = tmp_path / "snap.vtk"
        IO.write_vtk(str(path), state)
        quads, data = IO.read_vtk(str(path))
        end_time = [e for e in msh.elements if e.t1u == msh.ntu]
        assert len(quads) == len(end_time)
        nx, ny = IO.raster_shape(quads)
        assert (nx, ny) == (4, 4)
        raster = IO.rasterize(quads, data["S_w"], nx, ny)
        assert np.all(np.isfinite(raster))

    def test_only_end_of_step_leaves_are_written(self, tmp_path):
        g = M.CoarseGrid(2, 2, 10.0, 10.0, 5.0)
        msh = M.build_coarse(g, 0, 1).refine_temporal([(0, 0, 0, 0, 0)]).smooth()
        state = M.State(msh)
        path = tmp_path / "snap.vtk"
        IO.write_vtk(str(path), state)
        quads, _ = IO.read_vtk(str(path))
        assert len(quads) == 4  # one quad per column, not per space-time leaf


def series_from_rates(times, qo, qw):
    times = np.asarray(times, dtype=float)
    qo = np.asarray(qo, dtype=float)
    qw = np.asarray(qw, dtype=float)
    return D.RunSeries(
        times=times, produced_oil=qo * 53.0, produced_water=qw * 64.0,
        injected_water=np.zeros_like(times), rate_oil=qo, rate_water=qw,
        states=[], final_state=None, final_coarse=None,
    )


class TestRatesCsv:
    def test_empty_series_is_header_only(self, tmp_path):
        p = tmp_path / "r.csv"
        IO.write_rates_csv(str(p), series_from_rates([], [], []))
        assert p.read_text() == IO.CSV_HEADER + "\n"
        cols = IO.read_rates_csv(str(p))
        assert cols["time_days"].size == 0

    def test_trapezoid_cumulative_hand_case(self, tmp_path):
        p = tmp_path / "r.csv"
        IO.write_rates_csv(str(p), series_from_rates([5, 10, 15], [1, 2, 4], [0, 0, 1]))
        cols = IO.read_rates_csv(str(p))
        assert np.array_equal(cols["time_days"], [0.0, 5.0, 10.0, 15.0])
        assert np.allclose(cols["cum_oil_ft3"], [0.0, 2.5, 10.0, 25.0], rtol=1e-14)
        assert np.allclose(cols["cum_water_ft3"], [0.0, 0.0, 0.0, 2.5], rtol=1e-14)

    def test_cumulative_matches_trapezoid_oracle(self, tmp_path):
        rng = np.random.default_rng(7)
        times = np.cumsum(rng.uniform(1.0, 3.0, 12))
        qo = rng.uniform(0.0, 5.0, 12)
        p = tmp_path / "r.csv"
        IO.write_rates_csv(str(p), series_from_rates(times, qo, qo * 0.5))
        cols = IO.read_rates_csv(str(p))
        t = np.concatenate([[0.0], times])
        q = np.concatenate([[0.0], qo])
        oracle = np.array([np.trapezoid(q[: k + 1], t[: k + 1]) for k in range(t.size)])
        assert np.allclose(cols["cum_oil_ft3"], oracle, rtol=1e-12, atol=1e-14)

    def test_nonnegative_rates_give_monotone_cumulatives(self, tmp_path):
        rng = np.random.default_rng(11)
        for trial in range(5):
            times = np.cumsum(rng.uniform(0.5, 2.0, 8))
            qw = rng.uniform(0.0, 3.0, 8)
            p = tmp_path / f"r{trial}.csv"
            IO.write_rates_csv(str(p), series_from_rates(times, qw, qw))
            cols = IO.read_rates_csv(str(p))
            assert np.all(np.diff(cols["cum_water_ft3"]) >= 0.0)

    def test_header_is_exact(self):
        assert IO.CSV_HEADER == "time_days,qo_ft3_day,qw_ft3_day,cum_oil_ft3,cum_water_ft3"


class TestReport:
    def test_round_trip(self, tmp_path):
        rep = D.RunReport(
            mode="adaptive", n_steps=3, setup_seconds=1.5, linear_seconds=0.5,
            data_seconds=0.25, total_seconds=2.5, newton_total=17,
            linear_solves=17, passes_total=7, elements_per_pass=[16, 19, 49],
            conservation_oil=1e-12, conservation_water=3e-13,
        )
        p = tmp_path / "rep.txt"
        IO.write_report(str(p), rep)
        back = IO.read_report(str(p))
        assert back["mode"] == "adaptive"
        assert back["steps"] == 3
        assert back["newton_iterations"] == 17
        assert back["total_seconds"] == 2.5
        assert back["elements_per_pass"] == "16 19 49"
        assert back["conservation_water"] == 3e-13

    def test_speedup_helper(self):
        fast = D.RunReport(mode="adaptive", n_steps=1, total_seconds=2.0)
        slow = D.RunReport(mode="fine", n_steps=1, total_seconds=6.0)
        assert fast.speedup_vs(slow) == pytest.approx(3.0)


class TestExportResults:
    def test_empty_series(self, tmp_path):
        series = series_from_rates([], [], [])
        report = D.RunReport(mode="adaptive", n_steps=0)
        paths = IO.export_results(series, report, str(tmp_path / "out"))
        names = sorted(os.path.basename(p) for p in paths)
        assert names == ["run_rates.csv", "run_report.txt"]
        for p in paths:
            assert os.path.exists(p)

    def test_snapshots_and_final(self, tmp_path):
        series = series_from_rates([5.0], [1.0], [0.0])
        series.states = [four_cell_state()]
        series.final_state = series.states[0]
        report = D.RunReport(mode="adaptive", n_steps=1)
        paths = IO.export_results(series, report, str(tmp_path / "out"))
        names = sorted(os.path.basename(p) for p in paths)
        assert names == ["run_final.vtk", "run_rates.csv", "run_report.txt", "run_step0001.vtk"]


def write_run_config(path, out_dir, **over):
    lines = {
        "grid": {"nx": 4, "ny": 4, "levels_space": 1, "levels_time": 1},
        "time": {"dt": 5.0, "n_steps": 2},
        "wells": {
            "injector_x": 5.0, "injector_y": 5.0, "injector_rate": 0.3,
            "producer_x": 35.0, "producer_y": 35.0,
        },
        "rock": {"kind": "gaussian", "seed": 3},
        "solver": {"newton_max_iter": 60},
        "output": {"directory": out_dir},
    }
    for sect, key, val in over.get("extra", ()):
        lines.setdefault(sect, {})[key] = val
    text = ""
    for sect, kv in lines.items():
        text += f"[{sect}]\n" + "".join(f"{k} = {v}\n" for k, v in kv.items())
    path.write_text(text)
    return str(path)


class TestCli:
    def test_run_writes_outputs(self, tmp_path):
        out = str(tmp_path / "out")
        cfg = write_run_config(tmp_path / "case.ini", out)
        assert cli.main(["run", cfg]) == 0
        for suffix in ("run_rates.csv", "run_report.txt", "run_final.vtk"):
            assert os.path.exists(os.path.join(out, suffix))

    def test_identical_config_and_seed_give_identical_csv(self, tmp_path):
        cfg = write_run_config(tmp_path / "case.ini", str(tmp_path / "a"))
        assert cli.main(["run", cfg]) == 0
        assert cli.main(["run", cfg, "--out", str(tmp_path / "b")]) == 0
        a = (tmp_path / "a" / "run_rates.csv").read_bytes()
        b = (tmp_path / "b" / "run_rates.csv").read_bytes()
        assert a == b

    def test_mode_override(self, tmp_path):
        out = str(tmp_path / "out")
        cfg = write_run_config(tmp_path / "case.ini", out)
        assert cli.main(["run", cfg, "--mode", "coarse"]) == 0
        rep = IO.read_report(os.path.join(out, "run_report.txt"))
        assert rep["mode"] == "coarse"
        assert rep["elements_per_pass"] == "16 16"

    def test_compare_identical_runs(self, tmp_path, capsys):
        cfg = write_run_config(tmp_path / "case.ini", str(tmp_path / "a"))
        cli.main(["run", cfg])
        cli.main(["run", cfg, "--out", str(tmp_path / "b")])
        capsys.readouterr()
        assert cli.main(["compare", str(tmp_path / "a"), str(tmp_path / "b")]) == 0
        out = capsys.readouterr().out
        assert "sat_l2_rel: 0.000000e+00" in out
        assert "rate_rms_oil: 0.000000e+00" in out

    def test_upscale_writes_levels(self, tmp_path, capsys):
        f = tmp_path / "perm.txt"
        IO.write_field(str(f), IO.generate_synthetic_field("gaussian", 7, 8, 8))
        assert cli.main(["upscale", str(f), "--levels", "2"]) == 0
        for lev in (0, 1):
            for d in ("x", "y"):
                path = tmp_path / f"perm_L{lev}{d}.txt"
                assert path.exists()
                IO.load_field(str(path))

    def test_exit_code_config_error(self, tmp_path):
        assert cli.main(["run", str(tmp_path / "absent.ini")]) == 1
        bad = tmp_path / "bad.ini"
        bad.write_text("[grid]\nnx = -1\n")
        assert cli.main(["run", str(bad)]) == 1
        assert cli.main(["frobnicate"]) == 1
        f = tmp_path / "perm.txt"
        IO.write_field(str(f), np.full((6, 6), 1.0))
        assert cli.main(["upscale", str(f), "--levels", "2"]) == 1

    def test_exit_code_solver_failure(self, tmp_path):
        cfg = write_run_config(
            tmp_path / "case.ini", str(tmp_path / "out"),
            extra=(("solver", "newton_max_iter", 1), ("wells", "injector_rate", 3.0)),
        )
        assert cli.main(["run", cfg]) == 2

    def test_exit_code_io_error(self, tmp_path):
        blocker = tmp_path / "file.txt"
        blocker.write_text("x")
        cfg = write_run_config(
            tmp_path / "case.ini", str(blocker / "sub"),
            extra=(("grid", "levels_space", 0), ("grid", "levels_time", 0),
                   ("time", "n_steps", 1)),
        )
        assert cli.main(["run", cfg]) == 3
