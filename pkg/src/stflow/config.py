"""Run configuration: a flat dataclass, INI-style file parsing and validation.

The file format is `key = value` grouped in sections. Every key has a
default, so an empty file is a valid configuration. Unknown sections or
keys are rejected by name rather than silently ignored.

This module constructs the physics/assembly parameter objects from a
config but never imports the driver, so driver -> config stays acyclic.
"""

from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, fields

from . import assembly, mesh, physics
from .errors import ConfigError

MODES = ("adaptive", "fine", "coarse")
LINEAR_SOLVERS = ("direct", "gmres")
ROCK_SOURCES = ("synthetic", "files")
FIELD_KINDS = ("gaussian", "channel", "uniform")


@dataclass(frozen=True)
class RunConfig:
    """Everything one simulation run needs, with defaults for a small
    waterflood on a homogeneous 8x8 grid."""

    # [grid]
    nx: int = 8
    ny: int = 8
    dx: float = 10.0
    dy: float = 10.0
    thickness: float = 1.0
    levels_space: int = 0
    levels_time: int = 0

    # [time]
    dt: float = 10.0
    n_steps: int = 10

    # [fluid]
    rho_water: float = 64.0
    rho_oil: float = 53.0
    p_ref: float = 1000.0
    c_water: float = 3.0e-6
    c_oil: float = 1.0e-4
    mu_water: float = 0.3
    mu_oil: float = 3.0

    # [relperm]
    s_wirr: float = 0.2
    s_or: float = 0.2
    krw0: float = 1.0
    kro0: float = 1.0
    n_w: float = 2.0
    n_o: float = 2.0
    p_entry: float = 10.0
    l_cow: float = 0.2

    # [rock]
    source: str = "synthetic"
    kind: str = "uniform"
    seed: int = 0
    perm_md: float = 100.0
    log_sigma: float = 0.5
    correlation: float = 3.0
    contrast: float = 100.0
    porosity: float = 0.2
    kx_file: str = ""
    ky_file: str = ""
    phi_file: str = ""

    # [init]
    pressure: float = 1000.0
    s_water: float = 0.2

    # [wells]
    injector: bool = True
    injector_x: float = 5.0
    injector_y: float = 5.0
    injector_rate: float = 1.0
    producer: bool = True
    producer_x: float = 75.0
    producer_y: float = 75.0
    producer_bhp: float = 1000.0
    well_radius: float = 0.25

    # [solver]
    mode: str = "adaptive"
    linear_solver: str = "direct"
    newton_tol_rel: float = 1.0e-6
    newton_tol_abs: float = 1.0e-9
    newton_max_iter: int = 20
    warm_start: bool = True
    mark_all: bool = False

    # [output]
    directory: str = "out"
    write_vtk: bool = True
    verbose_indicators: bool = False

    def validate(self) -> "RunConfig":
        """Checks every invariant, naming the offending key(s) in the error."""
        problems: list[str] = []

        def need(ok: bool, msg: str) -> None:
            if not ok:
                problems.append(msg)

        need(self.nx >= 1 and self.ny >= 1, f"[grid] nx/ny must be >= 1, got {self.nx}/{self.ny}")
        need(self.dx > 0.0 and self.dy > 0.0, "[grid] dx and dy must be positive")
        need(self.thickness > 0.0, "[grid] thickness must be positive")
        need(self.levels_space >= 0, "[grid] levels_space must be >= 0")
        need(self.levels_time >= 0, "[grid] levels_time must be >= 0")
        need(self.dt > 0.0, "[time] dt must be positive")
        need(self.n_steps >= 0, "[time] n_steps must be >= 0")

        need(self.mode in MODES, f"[solver] mode must be one of {MODES}, got {self.mode!r}")
        need(
            self.linear_solver in LINEAR_SOLVERS,
            f"[solver] linear_solver must be one of {LINEAR_SOLVERS}, got {self.linear_solver!r}",
        )
        need(self.newton_tol_rel > 0.0, "[solver] newton_tol_rel must be positive")
        need(self.newton_tol_abs > 0.0, "[solver] newton_tol_abs must be positive")
        need(self.newton_max_iter >= 1, "[solver] newton_max_iter must be >= 1")

        need(self.source in ROCK_SOURCES, f"[rock] source must be one of {ROCK_SOURCES}")
        need(self.kind in FIELD_KINDS, f"[rock] kind must be one of {FIELD_KINDS}")
        need(0.0 < self.porosity <= 1.0, f"[rock] porosity must lie in (0, 1], got {self.porosity}")
        need(self.perm_md > 0.0, f"[rock] perm_md must be positive, got {self.perm_md}")
        need(self.log_sigma >= 0.0, "[rock] log_sigma must be >= 0")
        need(self.correlation > 0.0, "[rock] correlation must be positive")
        need(self.contrast >= 1.0, f"[rock] contrast must be >= 1, got {self.contrast}")
        if self.source == "files":
            need(bool(self.kx_file), "[rock] kx_file is required when source = files")
            need(bool(self.phi_file), "[rock] phi_file is required when source = files")

        need(0.0 <= self.s_water <= 1.0, f"[init] s_water must lie in [0, 1], got {self.s_water}")
        need(self.pressure > 0.0, "[init] pressure must be positive")

        lx, ly = self.nx * self.dx, self.ny * self.dy
        if self.injector:
            need(self.injector_rate > 0.0, "[wells] injector_rate must be positive")
            need(
                0.0 <= self.injector_x <= lx and 0.0 <= self.injector_y <= ly,
                "[wells] injector_x/injector_y lie outside the domain",
            )
        if self.producer:
            need(
                0.0 <= self.producer_x <= lx and 0.0 <= self.producer_y <= ly,
                "[wells] producer_x/producer_y lie outside the domain",
            )
        need(self.well_radius > 0.0, "[wells] well_radius must be positive")

        try:
            self.fluid()
        except ValueError as e:
            problems.append(f"[fluid] {e}")
        try:
            self.relperm()
        except ValueError as e:
            problems.append(f"[relperm] s_wirr/s_or/krw0/kro0/n_w/n_o/p_entry/l_cow: {e}")

        if problems:
            raise ConfigError("; ".join(problems))
        return self

    # -- constructors for the domain objects --------------------------------

    def fluid(self) -> physics.FluidProps:
        return physics.FluidProps(
            rho_ref=(self.rho_water, self.rho_oil),
            p_ref=(self.p_ref, self.p_ref),
            c_f=(self.c_water, self.c_oil),
            mu=(self.mu_water, self.mu_oil),
        )

    def relperm(self) -> physics.BrooksCoreyParams:
        return physics.BrooksCoreyParams(
            s_wirr=self.s_wirr,
            s_or=self.s_or,
            krw0=self.krw0,
            kro0=self.kro0,
            n_w=self.n_w,
            n_o=self.n_o,
            p_entry=self.p_entry,
            l_cow=self.l_cow,
        )

    def wells(self) -> tuple[assembly.Well, ...]:
        out = []
        if self.injector:
            out.append(
                assembly.Well(
                    "injector", self.injector_x, self.injector_y,
                    rate=self.injector_rate, r_w=self.well_radius, name="INJ",
                )
            )
        if self.producer:
            out.append(
                assembly.Well(
                    "producer", self.producer_x, self.producer_y,
                    p_bhp=self.producer_bhp, r_w=self.well_radius, name="PROD",
                )
            )
        return tuple(out)

    def grid(self, step_index: int = 0, t_start: float = 0.0) -> mesh.CoarseGrid:
        return mesh.CoarseGrid(
            self.nx, self.ny, self.dx, self.dy, self.dt,
            thickness=self.thickness, step_index=step_index, t_start=t_start,
        )


_SECTIONS = {
    "grid": ("nx", "ny", "dx", "dy", "thickness", "levels_space", "levels_time"),
    "time": ("dt", "n_steps"),
    "fluid": ("rho_water", "rho_oil", "p_ref", "c_water", "c_oil", "mu_water", "mu_oil"),
    "relperm": ("s_wirr", "s_or", "krw0", "kro0", "n_w", "n_o", "p_entry", "l_cow"),
    "rock": (
        "source", "kind", "seed", "perm_md", "log_sigma", "correlation",
        "contrast", "porosity", "kx_file", "ky_file", "phi_file",
    ),
    "init": ("pressure", "s_water"),
    "wells": (
        "injector", "injector_x", "injector_y", "injector_rate",
        "producer", "producer_x", "producer_y", "producer_bhp", "well_radius",
    ),
    "solver": (
        "mode", "linear_solver", "newton_tol_rel", "newton_tol_abs",
        "newton_max_iter", "warm_start", "mark_all",
    ),
    "output": ("directory", "write_vtk", "verbose_indicators"),
}

_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}
assert set(_FIELD_TYPES) == {k for keys in _SECTIONS.values() for k in keys}


def _convert(section: str, key: str, raw: str):
    kind = _FIELD_TYPES[key]
    raw = raw.strip()
    try:
        if kind == "bool":
            low = raw.lower()
            if low not in configparser.ConfigParser.BOOLEAN_STATES:
                raise ValueError(f"not a boolean: {raw!r}")
            return configparser.ConfigParser.BOOLEAN_STATES[low]
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        return raw
    except ValueError as e:
        raise ConfigError(f"[{section}] {key}: {e}") from None


def parse_config_text(text: str) -> RunConfig:
    """Parses INI text into a validated RunConfig."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as e:
        raise ConfigError(f"malformed config: {e}") from None

    unknown = [s for s in cp.sections() if s not in _SECTIONS]
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(sorted(unknown))}")
    bad_keys = [
        f"[{s}] {k}"
        for s in cp.sections()
        for k in cp[s]
        if k not in _SECTIONS[s]
    ]
    if bad_keys:
        raise ConfigError(f"unknown key(s): {', '.join(bad_keys)}")

    kwargs = {
        k: _convert(s, k, cp[s][k])
        for s in cp.sections()
        for k in cp[s]
    }
    return RunConfig(**kwargs).validate()


def parse_config(path: str) -> RunConfig:
    """Reads and validates a configuration file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    return parse_config_text(text)


def serialize_config(cfg: RunConfig) -> str:
    """Writes every key explicitly; parse(serialize(cfg)) == cfg."""
    values = asdict(cfg)
    lines = []
    for section, keys in _SECTIONS.items():
        lines.append(f"[{section}]")
        for k in keys:
            v = values[k]
            lines.append(f"{k} = {v!r}" if isinstance(v, float) else f"{k} = {v}")
        lines.append("")
    return "\n".join(lines)


def write_config(cfg: RunConfig, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_config(cfg))
