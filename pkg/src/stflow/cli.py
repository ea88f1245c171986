"""Command-line front end: run a simulation, upscale a field, compare runs.

Exit codes: 0 success, 1 configuration problem, 2 solver failure,
3 I/O failure.
"""

from __future__ import annotations

import argparse
import glob
import os
import sys
from dataclasses import replace

import numpy as np

from . import config as config_mod
from . import driver, io_out, upscaling
from .errors import ConfigError, SolverError


class _Parser(argparse.ArgumentParser):
    """Usage mistakes map to the config-error exit code, not argparse's 2."""

    def error(self, message):
        raise ConfigError(message)


def _cmd_run(args) -> int:
    cfg = config_mod.parse_config(args.config)
    overrides = {}
    if args.mode:
        overrides["mode"] = args.mode
    if args.linear_solver:
        overrides["linear_solver"] = args.linear_solver
    if args.out:
        overrides["directory"] = args.out
    if args.verbose_indicators:
        overrides["verbose_indicators"] = True
    if overrides:
        cfg = replace(cfg, **overrides).validate()

    series, report = driver.run_simulation(cfg)
    paths = io_out.export_results(series, report, cfg.directory)
    print(io_out.format_report(report))
    print("wrote:")
    for p in paths:
        print(f"  {p}")
    return 0


def _cmd_upscale(args) -> int:
    field = io_out.load_field(args.field)
    nxf, nyf = field.shape
    n = args.levels
    if n < 1:
        raise ConfigError(f"--levels must be >= 1, got {n}")
    if nxf % (1 << n) or nyf % (1 << n):
        raise ConfigError(
            f"a {nxf}x{nyf} field cannot be coarsened {n} levels "
            f"(dimensions must divide by {1 << n})"
        )

    def describe(lev, arr):
        return (
            f"level {lev}: {arr.shape[0]}x{arr.shape[1]} "
            f"min={arr.min():.6g} mean={arr.mean():.6g} max={arr.max():.6g}"
        )

    print(describe(n, field) + " (input)")
    stem = args.field.rsplit(".", 1)[0] if "." in os.path.basename(args.field) else args.field
    for lev in range(n - 1, -1, -1):
        ex, ey = upscaling.upscale_permeability(field, field, 1 << (n - lev))
        px, py = f"{stem}_L{lev}x.txt", f"{stem}_L{lev}y.txt"
        io_out.write_field(px, ex)
        io_out.write_field(py, ey)
        print(describe(lev, ex) + f" -> {px}, {py}")
    return 0


def _find_one(dirpath: str, suffix: str) -> str:
    hits = sorted(glob.glob(os.path.join(dirpath, f"*{suffix}")))
    if not hits:
        raise ConfigError(f"{dirpath}: no *{suffix} file found")
    return hits[0]


def _saturation_raster(dirpath: str) -> np.ndarray:
    quads, data = io_out.read_vtk(_find_one(dirpath, "_final.vtk"))
    if "S_w" not in data:
        raise ConfigError(f"{dirpath}: final VTK lacks an S_w array")
    nx, ny = io_out.raster_shape(quads)
    return io_out.rasterize(quads, data["S_w"], nx, ny)


def _common_raster(a: np.ndarray, b: np.ndarray):
    nx = max(a.shape[0], b.shape[0])
    ny = max(a.shape[1], b.shape[1])
    for arr in (a, b):
        if nx % arr.shape[0] or ny % arr.shape[1]:
            raise ConfigError("run rasters are not nested; cannot compare")
    up = lambda arr: arr.repeat(nx // arr.shape[0], axis=0).repeat(ny // arr.shape[1], axis=1)
    return up(a), up(b)


def _rate_rms(ra: dict, rb: dict, col: str) -> float:
    ta, tb = ra["time_days"], rb["time_days"]
    va, vb = ra[col], rb[col]
    if ta.size == 0 and tb.size == 0:
        return 0.0
    if ta.size == 0 or tb.size == 0:
        raise ConfigError("one run has an empty rate series")
    vb_on_a = np.interp(ta, tb, vb)
    return float(np.sqrt(np.mean((va - vb_on_a) ** 2)))


def _cmd_compare(args) -> int:
    sat_a, sat_b = _common_raster(
        _saturation_raster(args.run_a), _saturation_raster(args.run_b)
    )
    denom = np.linalg.norm(sat_b)
    sat_l2 = float(np.linalg.norm(sat_a - sat_b) / denom) if denom > 0 else float(
        np.linalg.norm(sat_a - sat_b)
    )

    ra = io_out.read_rates_csv(_find_one(args.run_a, "_rates.csv"))
    rb = io_out.read_rates_csv(_find_one(args.run_b, "_rates.csv"))
    rms_o = _rate_rms(ra, rb, "qo_ft3_day")
    rms_w = _rate_rms(ra, rb, "qw_ft3_day")

    rep_a = io_out.read_report(_find_one(args.run_a, "_report.txt"))
    rep_b = io_out.read_report(_find_one(args.run_b, "_report.txt"))
    ta, tb = rep_a.get("total_seconds", 0.0), rep_b.get("total_seconds", 0.0)
    speedup = tb / ta if ta > 0 else float("inf")

    print(f"sat_l2_rel: {sat_l2:.6e}")
    print(f"rate_rms_oil: {rms_o:.6e}")
    print(f"rate_rms_water: {rms_w:.6e}")
    print(f"speedup_a_over_b: {speedup:.3f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="stflow", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a simulation from a config file")
    p.add_argument("config")
    p.add_argument("--mode", choices=config_mod.MODES)
    p.add_argument("--linear-solver", choices=config_mod.LINEAR_SOLVERS)
    p.add_argument("--out", help="override the output directory")
    p.add_argument("--verbose-indicators", action="store_true")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("upscale", help="coarsen a permeability field file")
    p.add_argument("field")
    p.add_argument("--levels", type=int, required=True)
    p.set_defaults(func=_cmd_upscale)

    p = sub.add_parser("compare", help="compare two completed run directories")
    p.add_argument("run_a")
    p.add_argument("run_b")
    p.set_defaults(func=_cmd_compare)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    except SolverError as e:
        print(f"solver failure: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
