"""Fluid and rock constitutive models.

Slightly compressible densities, Brooks-Corey relative permeability and
capillary pressure, phase mobilities and face upwinding. Every nonlinear
function comes with its analytic derivative so the Jacobian assembly never
falls back to finite differences.

Units: psi, lb/ft3, cp, md, fraction. All functions accept scalars or numpy
arrays and are free of mutable state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

WATER = 0
OIL = 1

# Field-unit Darcy constant: md * psi / (cp * ft) -> ft3/day per ft2.
DARCY_CONST = 6.3283e-3

# Regularization floor above s_wirr for capillary pressure evaluation; the
# entry-pressure curve is singular at s_wirr and initial conditions sit there.
EPS_SAT = 1.0e-6


@dataclass(frozen=True)
class FluidProps:
    """Per-phase fluid properties (index 0 = water, 1 = oil)."""

    rho_ref: tuple[float, float] = (64.0, 53.0)
    p_ref: tuple[float, float] = (1000.0, 1000.0)
    c_f: tuple[float, float] = (3.0e-6, 1.0e-4)
    mu: tuple[float, float] = (0.3, 3.0)
    gravity: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self) -> None:
        for ph in (WATER, OIL):
            if self.rho_ref[ph] <= 0.0:
                raise ValueError(f"rho_ref[{ph}] must be positive, got {self.rho_ref[ph]}")
            if self.c_f[ph] < 0.0:
                raise ValueError(f"c_f[{ph}] must be non-negative, got {self.c_f[ph]}")
            if self.mu[ph] <= 0.0:
                raise ValueError(f"mu[{ph}] must be positive, got {self.mu[ph]}")


@dataclass(frozen=True)
class BrooksCoreyParams:
    s_wirr: float = 0.2
    s_or: float = 0.2
    krw0: float = 1.0
    kro0: float = 1.0
    n_w: float = 2.0
    n_o: float = 2.0
    p_entry: float = 10.0
    l_cow: float = 0.2

    def __post_init__(self) -> None:
        if self.s_wirr < 0.0 or self.s_or < 0.0:
            raise ValueError("s_wirr and s_or must be non-negative")
        if self.s_wirr + self.s_or >= 1.0:
            raise ValueError(
                f"s_wirr + s_or must be < 1, got {self.s_wirr} + {self.s_or}"
            )
        for name in ("krw0", "kro0"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ValueError(f"{name} must be in (0, 1], got {v}")
        if self.n_w <= 0.0 or self.n_o <= 0.0:
            raise ValueError("relperm exponents must be positive")
        if self.p_entry < 0.0:
            raise ValueError(f"p_entry must be non-negative, got {self.p_entry}")
        if self.l_cow <= 0.0:
            raise ValueError(f"l_cow must be positive, got {self.l_cow}")

    @property
    def mobile_range(self) -> float:
        return 1.0 - self.s_or - self.s_wirr


@dataclass
class RockField:
    """Per-level permeability (md) and porosity fields.

    Level 0 covers the coarse grid; level l covers the 2^l-refined grid.
    Arrays are indexed [i, j] with i along x.
    """

    kx: list[np.ndarray] = field(default_factory=list)
    ky: list[np.ndarray] = field(default_factory=list)
    phi: list[np.ndarray] = field(default_factory=list)

    def validate(self, nx: int | None = None, ny: int | None = None) -> None:
        if not (len(self.kx) == len(self.ky) == len(self.phi)) or not self.kx:
            raise ValueError("kx, ky and phi must hold the same, non-zero number of levels")
        for lev, (ax, ay, ap) in enumerate(zip(self.kx, self.ky, self.phi)):
            if nx is not None:
                want = (nx << lev, ny << lev)
                for name, arr in (("kx", ax), ("ky", ay), ("phi", ap)):
                    if arr.shape != want:
                        raise ValueError(
                            f"{name} at level {lev} has shape {arr.shape}, expected {want}"
                        )
            if np.any(ax < 0.0) or np.any(ay < 0.0):
                raise ValueError(f"permeability must be non-negative at level {lev}")
            if np.any(ap <= 0.0) or np.any(ap > 1.0):
                raise ValueError(f"porosity must lie in (0, 1] at level {lev}")


@dataclass(frozen=True)
class FluidRockModel:
    """Bundle handed to assembly/estimators: fluids + Brooks-Corey + rock."""

    fluid: FluidProps
    bc: BrooksCoreyParams
    rock: RockField


def density(fluid: FluidProps, phase: int, p):
    """rho = rho_ref * exp(c_f * (p - p_ref))."""
    return fluid.rho_ref[phase] * np.exp(fluid.c_f[phase] * (np.asarray(p, dtype=float) - fluid.p_ref[phase]))


def ddensity_dp(fluid: FluidProps, phase: int, p):
    return fluid.c_f[phase] * density(fluid, phase, p)


def _seff(bc: BrooksCoreyParams, s_w):
    """Effective water saturation clamped to [0, 1]."""
    se = (np.asarray(s_w, dtype=float) - bc.s_wirr) / bc.mobile_range
    return np.clip(se, 0.0, 1.0)


def kr(bc: BrooksCoreyParams, phase: int, s_w):
    """Brooks-Corey relative permeability of `phase` as a function of s_w."""
    se = _seff(bc, s_w)
    if phase == WATER:
        return bc.krw0 * se**bc.n_w
    return bc.kro0 * (1.0 - se) ** bc.n_o


def dkr_dsw(bc: BrooksCoreyParams, phase: int, s_w):
    """Analytic d(kr)/d(s_w); zero outside the mobile range (clamped branch)."""
    s_w = np.asarray(s_w, dtype=float)
    se = (s_w - bc.s_wirr) / bc.mobile_range
    inside = (se > 0.0) & (se < 1.0)
    se_c = np.clip(se, 0.0, 1.0)
    if phase == WATER:
        d = bc.krw0 * bc.n_w * se_c ** (bc.n_w - 1.0) / bc.mobile_range
    else:
        d = -bc.kro0 * bc.n_o * (1.0 - se_c) ** (bc.n_o - 1.0) / bc.mobile_range
    return np.where(inside, d, 0.0)


def pc(bc: BrooksCoreyParams, s_w):
    """Capillary pressure, evaluated at the regularization floor below s_wirr."""
    s_w = np.asarray(s_w, dtype=float)
    ds = np.maximum(s_w - bc.s_wirr, EPS_SAT)
    return bc.p_entry * ((1.0 - bc.s_wirr) / ds) ** bc.l_cow


def dpc_dsw(bc: BrooksCoreyParams, s_w):
    """Analytic d(pc)/d(s_w); zero on the floored branch."""
    s_w = np.asarray(s_w, dtype=float)
    ds = np.maximum(s_w - bc.s_wirr, EPS_SAT)
    d = -bc.l_cow * bc.p_entry * (1.0 - bc.s_wirr) ** bc.l_cow * ds ** (-bc.l_cow - 1.0)
    return np.where(s_w - bc.s_wirr > EPS_SAT, d, 0.0)


def mobility(fluid: FluidProps, bc: BrooksCoreyParams, phase: int, p, s_w):
    """lambda = kr(s_w) * rho(p) / mu."""
    return kr(bc, phase, s_w) * density(fluid, phase, p) / fluid.mu[phase]


def upwind_mobility(
    fluid: FluidProps,
    bc: BrooksCoreyParams,
    phase: int,
    u_tilde,
    p_left,
    p_right,
    s_left,
    s_right,
):
    """lambda* on a face: averaged density times kr at the upstream saturation.

    The auxiliary flux sign selects the branch; a zero flux takes the
    downstream (right) one.
    """
    rho_bar = 0.5 * (density(fluid, phase, p_left) + density(fluid, phase, p_right))
    s_up = np.where(np.asarray(u_tilde, dtype=float) > 0.0, s_left, s_right)
    return rho_bar * kr(bc, phase, s_up) / fluid.mu[phase]
