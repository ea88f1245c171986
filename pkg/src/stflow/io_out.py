"""Field ingestion, synthetic field generation and results export.

Field files are plain text: a first line "nx ny" and then nx*ny cell
values listed row by row with x running fastest. Results go out as legacy
ASCII VTK (end-of-step quads with cell data), a rates CSV and a
structured-text run report with the three timing buckets.
"""

from __future__ import annotations

import os

import numpy as np
from scipy import ndimage

from . import physics, upscaling
from .config import RunConfig
from .driver import RunReport, RunSeries
from .errors import ConfigError
from .mesh import State

CSV_HEADER = "time_days,qo_ft3_day,qw_ft3_day,cum_oil_ft3,cum_water_ft3"


# -- field files -------------------------------------------------------------


def load_field(path: str) -> np.ndarray:
    """Reads one cell-value grid; returns an (nx, ny) array, strictly positive."""
    with open(path, "r", encoding="utf-8") as fh:
        tokens = fh.read().split()
    if len(tokens) < 2:
        raise ConfigError(f"{path}: missing 'nx ny' header")
    try:
        nx, ny = int(tokens[0]), int(tokens[1])
        values = np.array([float(t) for t in tokens[2:]])
    except ValueError as e:
        raise ConfigError(f"{path}: {e}") from None
    if nx < 1 or ny < 1:
        raise ConfigError(f"{path}: dimensions must be >= 1, got {nx} {ny}")
    if values.size != nx * ny:
        raise ConfigError(
            f"{path}: expected {nx * ny} values for a {nx}x{ny} grid, got {values.size}"
        )
    if np.any(values <= 0.0) or not np.all(np.isfinite(values)):
        raise ConfigError(f"{path}: all values must be positive and finite")
    return values.reshape(ny, nx).T


def write_field(path: str, field: np.ndarray) -> None:
    """Inverse of load_field."""
    field = np.asarray(field, dtype=float)
    nx, ny = field.shape
    lines = [f"{nx} {ny}"]
    for j in range(ny):
        lines.append(" ".join(repr(float(v)) for v in field[:, j]))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def generate_synthetic_field(
    kind: str,
    seed: int,
    nx: int,
    ny: int,
    base: float = 100.0,
    log_sigma: float = 0.5,
    correlation: float = 3.0,
    contrast: float = 100.0,
) -> np.ndarray:
    """Deterministic stand-in permeability fields.

    gaussian: exponentiated smoothed white noise, log standard deviation
    log_sigma, correlation length in cells. channel: a sinuous band of
    base*contrast over a base background (needs ny >= 4 for the band to
    leave background cells uncovered). uniform: constant base.
    """
    if nx < 1 or ny < 1:
        raise ConfigError(f"field dimensions must be >= 1, got {nx} {ny}")
    rng = np.random.default_rng(seed)
    if kind == "uniform":
        return np.full((nx, ny), base)
    if kind == "gaussian":
        z = ndimage.gaussian_filter(rng.standard_normal((nx, ny)), sigma=correlation, mode="reflect")
        sd = z.std()
        if sd > 0.0:
            z = (z - z.mean()) / sd
        return base * np.exp(log_sigma * z)
    if kind == "channel":
        phase = rng.uniform(0.0, 2.0 * np.pi)
        waves = rng.uniform(1.0, 2.5)
        i = np.arange(nx)[:, None] + 0.5
        j = np.arange(ny)[None, :] + 0.5
        center = ny / 2.0 + 0.2 * ny * np.sin(2.0 * np.pi * waves * i / nx + phase)
        width = max(1.0, ny / 6.0)
        field = np.full((nx, ny), base)
        field[np.abs(j - center) <= width / 2.0] = base * contrast
        return field
    raise ConfigError(f"unknown synthetic field kind {kind!r}")


def build_model(cfg: RunConfig) -> physics.FluidRockModel:
    """Rock + fluid bundle at all spatial levels, per the config."""
    ls = cfg.levels_space
    nxf, nyf = cfg.nx << ls, cfg.ny << ls
    if cfg.source == "files":
        kx = load_field(cfg.kx_file)
        ky = load_field(cfg.ky_file) if cfg.ky_file else kx.copy()
        phi = load_field(cfg.phi_file)
        for name, arr in (("kx_file", kx), ("ky_file", ky), ("phi_file", phi)):
            if arr.shape != (nxf, nyf):
                raise ConfigError(
                    f"[rock] {name}: finest grid is {nxf}x{nyf}, file holds {arr.shape[0]}x{arr.shape[1]}"
                )
    else:
        kx = generate_synthetic_field(
            cfg.kind, cfg.seed, nxf, nyf,
            base=cfg.perm_md, log_sigma=cfg.log_sigma,
            correlation=cfg.correlation, contrast=cfg.contrast,
        )
        ky = kx.copy()
        phi = np.full((nxf, nyf), cfg.porosity)
    try:
        rock = upscaling.build_level_fields(kx, ky, phi, cfg.nx, cfg.ny, ls)
    except ValueError as e:
        raise ConfigError(f"[rock] {e}") from None
    return physics.FluidRockModel(cfg.fluid(), cfg.relperm(), rock)


# -- VTK export --------------------------------------------------------------


def write_vtk(path: str, state: State) -> None:
    """End-of-step leaves as quad cells with S_w, P_o, level_s, level_t."""
    mesh = state.mesh
    g = mesh.grid
    ntu = mesh.ntu
    cells = [e for e in mesh.elements if e.t1u == ntu]
    ox, oy = g.origin
    ux, uy = mesh.unit_x, mesh.unit_y

    lines = [
        "# vtk DataFile Version 3.0",
        f"end-of-step cell data, t = {g.t_start + g.dt0!r} days",
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {4 * len(cells)} double",
    ]
    for e in cells:
        x0, y0 = ox + e.x0u * ux, oy + e.y0u * uy
        x1, y1 = x0 + e.dx, y0 + e.dy
        lines.append(f"{x0!r} {y0!r} 0.0")
        lines.append(f"{x1!r} {y0!r} 0.0")
        lines.append(f"{x1!r} {y1!r} 0.0")
        lines.append(f"{x0!r} {y1!r} 0.0")
    lines.append(f"CELLS {len(cells)} {5 * len(cells)}")
    for c in range(len(cells)):
        b = 4 * c
        lines.append(f"4 {b} {b + 1} {b + 2} {b + 3}")
    lines.append(f"CELL_TYPES {len(cells)}")
    lines.extend("9" for _ in cells)

    lines.append(f"CELL_DATA {len(cells)}")
    for name, vals in (
        ("S_w", (repr(float(state.s[e.index])) for e in cells)),
        ("P_o", (repr(float(state.p[e.index])) for e in cells)),
        ("level_s", (str(e.level_s) for e in cells)),
        ("level_t", (str(e.level_t) for e in cells)),
    ):
        kind = "double" if name in ("S_w", "P_o") else "int"
        lines.append(f"SCALARS {name} {kind} 1")
        lines.append("LOOKUP_TABLE default")
        lines.extend(vals)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_vtk(path: str):
    """Reads files produced by write_vtk.

    Returns (quads, data): quads an (n, 4) array of [x0, y0, x1, y1]
    bounding boxes, data a dict of the cell arrays.
    """
    with open(path, "r", encoding="utf-8") as fh:
        tokens = fh.read().split()

    def find(word: str, start: int = 0) -> int:
        try:
            return tokens.index(word, start)
        except ValueError:
            raise ConfigError(f"{path}: malformed VTK, missing {word}") from None

    ip = find("POINTS")
    n_pts = int(tokens[ip + 1])
    coords = np.array([float(t) for t in tokens[ip + 3:ip + 3 + 3 * n_pts]])
    pts = coords.reshape(n_pts, 3)[:, :2]

    ic = find("CELLS", ip)
    n_cells = int(tokens[ic + 1])
    quads = np.empty((n_cells, 4))
    pos = ic + 3
    for c in range(n_cells):
        if tokens[pos] != "4":
            raise ConfigError(f"{path}: only quad cells are supported")
        ids = [int(tokens[pos + 1 + k]) for k in range(4)]
        xs, ys = pts[ids, 0], pts[ids, 1]
        quads[c] = (xs.min(), ys.min(), xs.max(), ys.max())
        pos += 5

    id_ = find("CELL_DATA", pos)
    if int(tokens[id_ + 1]) != n_cells:
        raise ConfigError(f"{path}: CELL_DATA count does not match CELLS")
    data: dict[str, np.ndarray] = {}
    pos = id_ + 2
    while pos < len(tokens) and tokens[pos] == "SCALARS":
        name = tokens[pos + 1]
        pos += 4  # SCALARS name type 1
        if tokens[pos] == "LOOKUP_TABLE":
            pos += 2
        data[name] = np.array([float(t) for t in tokens[pos:pos + n_cells]])
        pos += n_cells
    return quads, data


def rasterize(quads: np.ndarray, values: np.ndarray, nx: int, ny: int):
    """Paints quad cell values onto an (nx, ny) raster spanning the quads'
    bounding box. Cell edges must align with the raster."""
    x0, y0 = quads[:, 0].min(), quads[:, 1].min()
    hx = (quads[:, 2].max() - x0) / nx
    hy = (quads[:, 3].max() - y0) / ny
    out = np.full((nx, ny), np.nan)
    for (qx0, qy0, qx1, qy1), v in zip(quads, values):
        i0 = int(round((qx0 - x0) / hx))
        i1 = int(round((qx1 - x0) / hx))
        j0 = int(round((qy0 - y0) / hy))
        j1 = int(round((qy1 - y0) / hy))
        out[i0:i1, j0:j1] = v
    if np.any(np.isnan(out)):
        raise ConfigError("quads do not tile the raster")
    return out


def raster_shape(quads: np.ndarray) -> tuple[int, int]:
    """Finest raster resolution implied by the smallest quad."""
    wx = (quads[:, 2] - quads[:, 0]).min()
    wy = (quads[:, 3] - quads[:, 1]).min()
    nx = int(round((quads[:, 2].max() - quads[:, 0].min()) / wx))
    ny = int(round((quads[:, 3].max() - quads[:, 1].min()) / wy))
    return nx, ny


# -- rates CSV and run report -------------------------------------------------


def write_rates_csv(path: str, series: RunSeries) -> None:
    """Step-average production rates and trapezoid cumulative volumes.

    A t = 0 row with zero rates anchors the integration; an empty series
    writes the header only.
    """
    lines = [CSV_HEADER]
    if series.n_steps:
        t = np.concatenate([[0.0], series.times])
        qo = np.concatenate([[0.0], series.rate_oil])
        qw = np.concatenate([[0.0], series.rate_water])
        dt = np.diff(t)
        cum_o = np.concatenate([[0.0], np.cumsum(0.5 * (qo[1:] + qo[:-1]) * dt)])
        cum_w = np.concatenate([[0.0], np.cumsum(0.5 * (qw[1:] + qw[:-1]) * dt)])
        for row in zip(t, qo, qw, cum_o, cum_w):
            lines.append(",".join(repr(float(v)) for v in row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_rates_csv(path: str) -> dict[str, np.ndarray]:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or lines[0] != CSV_HEADER:
        raise ConfigError(f"{path}: unexpected CSV header")
    cols = CSV_HEADER.split(",")
    body = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    if body.size == 0:
        body = body.reshape(0, len(cols))
    return {name: body[:, k] for k, name in enumerate(cols)}


def write_report(path: str, report: RunReport) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_report(report) + "\n")


def format_report(report: RunReport) -> str:
    lines = [
        "run report",
        f"mode: {report.mode}",
        f"steps: {report.n_steps}",
        f"passes: {report.passes_total}",
        f"newton_iterations: {report.newton_total}",
        f"linear_solves: {report.linear_solves}",
        f"elements_total: {report.elements_total}",
        "elements_per_pass: " + " ".join(str(n) for n in report.elements_per_pass),
        f"setup_seconds: {report.setup_seconds!r}",
        f"linear_seconds: {report.linear_seconds!r}",
        f"data_seconds: {report.data_seconds!r}",
        f"total_seconds: {report.total_seconds!r}",
        f"conservation_oil: {report.conservation_oil!r}",
        f"conservation_water: {report.conservation_water!r}",
    ]
    return "\n".join(lines)


def read_report(path: str) -> dict:
    out: dict = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if ":" not in line:
                continue
            key, _, raw = line.partition(":")
            raw = raw.strip()
            try:
                out[key.strip()] = float(raw) if "." in raw or "e" in raw else int(raw)
            except ValueError:
                out[key.strip()] = raw
    return out


def export_results(series: RunSeries, report: RunReport, out_dir: str, prefix: str = "run"):
    """Writes rates CSV, report text and VTK snapshots; returns the paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []

    p = os.path.join(out_dir, f"{prefix}_rates.csv")
    write_rates_csv(p, series)
    paths.append(p)

    p = os.path.join(out_dir, f"{prefix}_report.txt")
    write_report(p, report)
    paths.append(p)

    for k, st in enumerate(series.states):
        p = os.path.join(out_dir, f"{prefix}_step{k + 1:04d}.vtk")
        write_vtk(p, st)
        paths.append(p)
    if series.final_state is not None:
        p = os.path.join(out_dir, f"{prefix}_final.vtk")
        write_vtk(p, series.final_state)
        paths.append(p)
    return paths
