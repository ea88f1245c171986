"""Fully implicit residual and Jacobian assembly on a space-time mesh.

Unknown vector layout: [P_o per element, S_w per element, oil auxiliary flux
per interior SubFace, water auxiliary flux per SubFace]. Row layout: [total
mass balance per element, water mass balance per element, oil constitutive
relation per SubFace, water constitutive relation per SubFace].

Each element balances mass over its own time interval (backward Euler): the
accumulation difference pairs its end-of-interval state against the previous
time leaf of the same column, or against the step-start field for the first
leaf. A SubFace couples the two adjacent elements through their single
end-of-interval pressures, whatever the time overlap, which makes the
temporal coupling lower triangular within every column.

Auxiliary fluxes carry ft3*cp integrated over the SubFace's space-time
measure; multiplying by an upwinded mass mobility (lb/(ft3*cp)) gives the
phase mass through the face.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import physics
from ._kernels import face_scatter_residual, face_jacobian_values
from .errors import ConfigError, SolverError
from .mesh import SpaceTimeMesh
from .physics import WATER, OIL, DARCY_CONST


@dataclass(frozen=True)
class Well:
    """Vertical well at a fixed physical location.

    Injectors deliver `rate` ft3/day of water (converted to mass at reference
    density); producers operate at a fixed bottom-hole pressure via a
    Peaceman index with well radius `r_w`.
    """

    kind: str
    x: float
    y: float
    rate: float = 0.0
    p_bhp: float = 0.0
    r_w: float = 0.25
    name: str = ""

    def __post_init__(self) -> None:
        if self.kind not in ("injector", "producer"):
            raise ConfigError(f"unknown well kind {self.kind!r}")
        if self.kind == "injector" and self.rate <= 0.0:
            raise ConfigError(f"injector rate must be positive, got {self.rate}")
        if self.r_w <= 0.0:
            raise ConfigError(f"well radius must be positive, got {self.r_w}")


class AssemblyPlan:
    """Flattened element/face data for one mesh, one rock model and one
    step-start state. Also owns the fixed sparsity pattern of the Jacobian."""

    def __init__(
        self,
        mesh: SpaceTimeMesh,
        model: physics.FluidRockModel,
        wells: tuple[Well, ...],
        p_start: np.ndarray,
        s_start: np.ndarray,
    ):
        self.mesh = mesh
        self.model = model
        self.wells = tuple(wells)
        n = mesh.n_elements
        m = mesh.n_subfaces
        self.n_el, self.n_f = n, m
        self.n_dof = 2 * n + 2 * m
        g = mesh.grid

        p_start = np.asarray(p_start, dtype=float)
        s_start = np.asarray(s_start, dtype=float)
        if p_start.shape != (g.nx, g.ny) or s_start.shape != (g.nx, g.ny):
            raise ValueError(
                f"step-start fields must have shape {(g.nx, g.ny)}, got {p_start.shape}"
            )

        vol = np.empty(n)
        dt = np.empty(n)
        kx = np.empty(n)
        ky = np.empty(n)
        phi = np.empty(n)
        dxn = np.empty(n)
        dyn = np.empty(n)
        p0 = np.empty(n)
        s0 = np.empty(n)
        for e in mesh.elements:
            i = e.index
            vol[i] = e.volume
            dt[i] = e.duration
            kx[i] = model.rock.kx[e.level_s][e.ci, e.cj]
            ky[i] = model.rock.ky[e.level_s][e.ci, e.cj]
            phi[i] = model.rock.phi[e.level_s][e.ci, e.cj]
            dxn[i] = e.dx
            dyn[i] = e.dy
            ic, jc = mesh.coarse_ancestor(e)
            p0[i] = p_start[ic, jc]
            s0[i] = s_start[ic, jc]
        self.vol, self.dt, self.kx, self.ky, self.phi = vol, dt, kx, ky, phi
        self.pv = phi * vol
        self.p_start, self.s_start = p0, s0
        self.prev = mesh.prev_in_time()

        f_left = np.empty(m, dtype=np.int64)
        f_right = np.empty(m, dtype=np.int64)
        meas = np.empty(m)
        orient = np.empty(m, dtype=np.int8)
        trans = np.empty(m)
        for sf in mesh.subfaces:
            f = sf.index
            f_left[f] = sf.left
            f_right[f] = sf.right
            meas[f] = sf.measure
            orient[f] = sf.orient
            kl = kx[sf.left] if sf.orient == 0 else ky[sf.left]
            kr_ = kx[sf.right] if sf.orient == 0 else ky[sf.right]
            dl = dxn[sf.left] if sf.orient == 0 else dyn[sf.left]
            dr = dxn[sf.right] if sf.orient == 0 else dyn[sf.right]
            if kl <= 0.0 or kr_ <= 0.0:
                trans[f] = 0.0
            else:
                trans[f] = DARCY_CONST * 2.0 * sf.measure / (dl / kl + dr / kr_)
        self.f_left, self.f_right = f_left, f_right
        self.meas, self.orient, self.trans = meas, orient, trans

        self._setup_wells()
        self._setup_pattern()

        # residual scaling: mass rows by pore volume, flux rows by measure
        scale = np.empty(self.n_dof)
        scale[:n] = 1.0 / self.pv
        scale[n:2 * n] = 1.0 / self.pv
        scale[2 * n:2 * n + m] = 1.0 / meas
        scale[2 * n + m:] = 1.0 / meas
        self.row_scale = scale

    def _setup_wells(self) -> None:
        mesh, model = self.mesh, self.model
        n = self.n_el
        self.w_inj = np.zeros(n)
        self.prod_widt = np.zeros(n)
        self.prod_pbhp = np.zeros(n)
        taken: dict[tuple[int, int, int], str] = {}
        g = mesh.grid
        for w in self.wells:
            if not (g.origin[0] <= w.x <= g.origin[0] + g.nx * g.dx0) or not (
                g.origin[1] <= w.y <= g.origin[1] + g.ny * g.dy0
            ):
                raise ConfigError(
                    f"well {w.name or w.kind!r} at ({w.x}, {w.y}) lies outside the domain"
                )
            col = mesh.column_at_point(w.x, w.y)
            if col in taken:
                raise ConfigError(
                    f"wells {taken[col]!r} and {w.name or w.kind!r} share a mesh column"
                )
            taken[col] = w.name or w.kind
            for eid in mesh.elements_of_column(col):
                e = mesh.elements[eid]
                if w.kind == "injector":
                    rho_ref = model.fluid.rho_ref[WATER]
                    self.w_inj[eid] = rho_ref * w.rate * e.duration
                else:
                    kxe, kye = self.kx[eid], self.ky[eid]
                    if kxe <= 0.0 or kye <= 0.0:
                        raise ConfigError(
                            f"producer {w.name or ''} sits in a zero-permeability cell"
                        )
                    r_eq = 0.14 * np.sqrt(e.dx**2 + e.dy**2)
                    wi = (
                        DARCY_CONST * 2.0 * np.pi * np.sqrt(kxe * kye)
                        * mesh.grid.thickness / np.log(r_eq / w.r_w)
                    )
                    self.prod_widt[eid] = wi * e.duration
                    self.prod_pbhp[eid] = w.p_bhp

    def _setup_pattern(self) -> None:
        n, m = self.n_el, self.n_f
        el = np.arange(n, dtype=np.int64)
        rows8 = np.empty((n, 8), dtype=np.int64)
        cols8 = np.empty((n, 8), dtype=np.int64)
        rows8[:, 0] = rows8[:, 1] = rows8[:, 4] = rows8[:, 5] = el
        rows8[:, 2] = rows8[:, 3] = rows8[:, 6] = rows8[:, 7] = n + el
        has_prev = self.prev >= 0
        pcol = np.where(has_prev, self.prev, el)
        cols8[:, 0] = cols8[:, 2] = el
        cols8[:, 1] = cols8[:, 3] = n + el
        cols8[:, 4] = cols8[:, 6] = pcol
        cols8[:, 5] = cols8[:, 7] = n + pcol

        fl, fr = self.f_left, self.f_right
        uo = 2 * n + np.arange(m, dtype=np.int64)
        uw = uo + m
        rows38 = np.empty((m, 38), dtype=np.int64)
        cols38 = np.empty((m, 38), dtype=np.int64)
        for base, row in ((0, fl), (5, fr), (10, fl), (15, fr), (20, n + fl), (25, n + fr)):
            for k in range(5):
                rows38[:, base + k] = row
        five = np.stack([uo, fl, fr, n + fl, n + fr], axis=1)
        cols38[:, 0:5] = five
        cols38[:, 5:10] = five
        five_w = np.stack([uw, fl, fr, n + fl, n + fr], axis=1)
        cols38[:, 10:15] = five_w
        cols38[:, 15:20] = five_w
        cols38[:, 20:25] = five_w
        cols38[:, 25:30] = five_w
        rows38[:, 30:33] = uo[:, None]
        cols38[:, 30] = uo
        cols38[:, 31] = fl
        cols38[:, 32] = fr
        rows38[:, 33:38] = uw[:, None]
        cols38[:, 33] = uw
        cols38[:, 34] = fl
        cols38[:, 35] = fr
        cols38[:, 36] = n + fl
        cols38[:, 37] = n + fr
        self.jac_rows = np.concatenate([rows8.ravel(), rows38.ravel()])
        self.jac_cols = np.concatenate([cols8.ravel(), cols38.ravel()])
        self._has_prev = has_prev

    def split(self, x: np.ndarray):
        n, m = self.n_el, self.n_f
        return x[:n], x[n:2 * n], x[2 * n:2 * n + m], x[2 * n + m:]


def _face_state(plan: AssemblyPlan, p, s):
    fl, fr = plan.f_left, plan.f_right
    return p[fl], p[fr], s[fl], s[fr]


def _upwind_arrays(plan, fluid, bc, phase, ut, pl, pr, sl, sr):
    """kr and dkr at the upwind saturation; dkr split into left/right slots
    with the inactive side zeroed (zero flux upwinds from the right)."""
    up_left = ut > 0.0
    s_up = np.where(up_left, sl, sr)
    kr_up = physics.kr(bc, phase, s_up)
    dkr = physics.dkr_dsw(bc, phase, s_up)
    dkr_l = np.where(up_left, dkr, 0.0)
    dkr_r = np.where(up_left, 0.0, dkr)
    return kr_up, dkr_l, dkr_r


def _element_parts(plan: AssemblyPlan, p, s):
    """Accumulation terms and their previous-interval pairing."""
    fluid = plan.model.fluid
    prev = plan.prev
    safe_prev = np.maximum(prev, 0)
    has = plan._has_prev
    p_prev = np.where(has, p[safe_prev], plan.p_start)
    s_prev = np.where(has, s[safe_prev], plan.s_start)
    rho_w = physics.density(fluid, WATER, p)
    rho_o = physics.density(fluid, OIL, p)
    rho_wp = physics.density(fluid, WATER, p_prev)
    rho_op = physics.density(fluid, OIL, p_prev)
    mw = plan.pv * rho_w * s
    mo = plan.pv * rho_o * (1.0 - s)
    mwp = plan.pv * rho_wp * s_prev
    mop = plan.pv * rho_op * (1.0 - s_prev)
    return p_prev, s_prev, rho_w, rho_o, rho_wp, rho_op, mw, mo, mwp, mop


def production_mass(plan: AssemblyPlan, p, s):
    """Produced mass per element and phase (lb over the element's interval),
    Peaceman inflow at the element's end-of-interval state."""
    fluid, bc = plan.model.fluid, plan.model.bc
    dp = p - plan.prod_pbhp
    lam_w = physics.mobility(fluid, bc, WATER, p, s)
    lam_o = physics.mobility(fluid, bc, OIL, p, s)
    q_w = plan.prod_widt * lam_w * dp
    q_o = plan.prod_widt * lam_o * dp
    return q_o, q_w


def assemble_residual(plan: AssemblyPlan, x: np.ndarray) -> np.ndarray:
    p, s, ut_o, ut_w = plan.split(x)
    if not np.all(np.isfinite(x)):
        raise SolverError("non-finite entries in the state vector")
    fluid, bc = plan.model.fluid, plan.model.bc
    (_, _, _, _, _, _, mw, mo, mwp, mop) = _element_parts(plan, p, s)

    r_tot = (mw + mo) - (mwp + mop)
    r_wat = mw - mwp

    pl, pr, sl, sr = _face_state(plan, p, s)
    rho_ol = physics.density(fluid, OIL, pl)
    rho_or = physics.density(fluid, OIL, pr)
    rho_wl = physics.density(fluid, WATER, pl)
    rho_wr = physics.density(fluid, WATER, pr)
    kr_o, _, _ = _upwind_arrays(plan, fluid, bc, OIL, ut_o, pl, pr, sl, sr)
    kr_w, _, _ = _upwind_arrays(plan, fluid, bc, WATER, ut_w, pl, pr, sl, sr)
    u_o = 0.5 * (rho_ol + rho_or) * kr_o / fluid.mu[OIL] * ut_o
    u_w = 0.5 * (rho_wl + rho_wr) * kr_w / fluid.mu[WATER] * ut_w
    face_scatter_residual(plan.f_left, plan.f_right, u_o, u_w, r_tot, r_wat)

    q_o, q_w = production_mass(plan, p, s)
    r_tot += q_o + q_w - plan.w_inj
    r_wat += q_w - plan.w_inj

    pc_l = physics.pc(bc, sl)
    pc_r = physics.pc(bc, sr)
    r_co = ut_o - plan.trans * (pl - pr)
    r_cw = ut_w - plan.trans * ((pl - pc_l) - (pr - pc_r))
    return np.concatenate([r_tot, r_wat, r_co, r_cw])


def assemble_jacobian(plan: AssemblyPlan, x: np.ndarray):
    """Residual and Jacobian (CSR) at x."""
    p, s, ut_o, ut_w = plan.split(x)
    if not np.all(np.isfinite(x)):
        raise SolverError("non-finite entries in the state vector")
    fluid, bc = plan.model.fluid, plan.model.bc
    n, m = plan.n_el, plan.n_f
    (p_prev, s_prev, rho_w, rho_o, rho_wp, rho_op, mw, mo, mwp, mop) = _element_parts(plan, p, s)

    r_tot = (mw + mo) - (mwp + mop)
    r_wat = mw - mwp

    drho_w = physics.ddensity_dp(fluid, WATER, p)
    drho_o = physics.ddensity_dp(fluid, OIL, p)
    vals8 = np.empty((n, 8))
    vals8[:, 0] = plan.pv * (drho_w * s + drho_o * (1.0 - s))
    vals8[:, 1] = plan.pv * (rho_w - rho_o)
    vals8[:, 2] = plan.pv * drho_w * s
    vals8[:, 3] = plan.pv * rho_w
    drho_wp = physics.ddensity_dp(fluid, WATER, p_prev)
    drho_op = physics.ddensity_dp(fluid, OIL, p_prev)
    vals8[:, 4] = -plan.pv * (drho_wp * s_prev + drho_op * (1.0 - s_prev))
    vals8[:, 5] = -plan.pv * (rho_wp - rho_op)
    vals8[:, 6] = -plan.pv * drho_wp * s_prev
    vals8[:, 7] = -plan.pv * rho_wp
    np.multiply(vals8[:, 4:8], plan._has_prev[:, None], out=vals8[:, 4:8])

    # producers: Peaceman terms into the end-of-interval state's own slots
    dp_bhp = p - plan.prod_pbhp
    kr_w_el = physics.kr(bc, WATER, s)
    kr_o_el = physics.kr(bc, OIL, s)
    dlam_w_dp = kr_w_el * drho_w / fluid.mu[WATER]
    dlam_o_dp = kr_o_el * drho_o / fluid.mu[OIL]
    dlam_w_ds = physics.dkr_dsw(bc, WATER, s) * rho_w / fluid.mu[WATER]
    dlam_o_ds = physics.dkr_dsw(bc, OIL, s) * rho_o / fluid.mu[OIL]
    lam_w_el = kr_w_el * rho_w / fluid.mu[WATER]
    lam_o_el = kr_o_el * rho_o / fluid.mu[OIL]
    dqw_dp = plan.prod_widt * (lam_w_el + dp_bhp * dlam_w_dp)
    dqo_dp = plan.prod_widt * (lam_o_el + dp_bhp * dlam_o_dp)
    dqw_ds = plan.prod_widt * dp_bhp * dlam_w_ds
    dqo_ds = plan.prod_widt * dp_bhp * dlam_o_ds
    vals8[:, 0] += dqw_dp + dqo_dp
    vals8[:, 1] += dqw_ds + dqo_ds
    vals8[:, 2] += dqw_dp
    vals8[:, 3] += dqw_ds

    pl, pr, sl, sr = _face_state(plan, p, s)
    rho_ol = physics.density(fluid, OIL, pl)
    rho_or = physics.density(fluid, OIL, pr)
    rho_wl = physics.density(fluid, WATER, pl)
    rho_wr = physics.density(fluid, WATER, pr)
    drho_ol = physics.ddensity_dp(fluid, OIL, pl)
    drho_or = physics.ddensity_dp(fluid, OIL, pr)
    drho_wl = physics.ddensity_dp(fluid, WATER, pl)
    drho_wr = physics.ddensity_dp(fluid, WATER, pr)
    kr_o, dkr_ol, dkr_or = _upwind_arrays(plan, fluid, bc, OIL, ut_o, pl, pr, sl, sr)
    kr_w, dkr_wl, dkr_wr = _upwind_arrays(plan, fluid, bc, WATER, ut_w, pl, pr, sl, sr)
    u_o = 0.5 * (rho_ol + rho_or) * kr_o / fluid.mu[OIL] * ut_o
    u_w = 0.5 * (rho_wl + rho_wr) * kr_w / fluid.mu[WATER] * ut_w
    face_scatter_residual(plan.f_left, plan.f_right, u_o, u_w, r_tot, r_wat)

    q_o, q_w = production_mass(plan, p, s)
    r_tot += q_o + q_w - plan.w_inj
    r_wat += q_w - plan.w_inj

    dpc_l = physics.dpc_dsw(bc, sl)
    dpc_r = physics.dpc_dsw(bc, sr)
    vals38 = np.empty((m, 38))
    face_jacobian_values(
        plan.trans, ut_o, ut_w,
        rho_ol, rho_or, drho_ol, drho_or, kr_o, dkr_ol, dkr_or,
        rho_wl, rho_wr, drho_wl, drho_wr, kr_w, dkr_wl, dkr_wr,
        dpc_l, dpc_r,
        fluid.mu[OIL], fluid.mu[WATER],
        vals38,
    )

    pc_l = physics.pc(bc, sl)
    pc_r = physics.pc(bc, sr)
    r_co = ut_o - plan.trans * (pl - pr)
    r_cw = ut_w - plan.trans * ((pl - pc_l) - (pr - pc_r))

    r = np.concatenate([r_tot, r_wat, r_co, r_cw])
    vals = np.concatenate([vals8.ravel(), vals38.ravel()])
    jac = sp.coo_matrix(
        (vals, (plan.jac_rows, plan.jac_cols)), shape=(plan.n_dof, plan.n_dof)
    ).tocsr()
    return r, jac


def compute_phase_fluxes(plan: AssemblyPlan, x: np.ndarray):
    """Upwinded phase masses (lb) through every interior SubFace."""
    p, s, ut_o, ut_w = plan.split(x)
    fluid, bc = plan.model.fluid, plan.model.bc
    pl, pr, sl, sr = _face_state(plan, p, s)
    u_o = physics.upwind_mobility(fluid, bc, OIL, ut_o, pl, pr, sl, sr) * ut_o
    u_w = physics.upwind_mobility(fluid, bc, WATER, ut_w, pl, pr, sl, sr) * ut_w
    return u_o, u_w


def constitutive_fluxes(plan: AssemblyPlan, p, s):
    """Auxiliary fluxes implied by cell values through the constitutive
    relation (used to seed brand-new faces and to reconstruct virtual
    start-of-step fluxes)."""
    bc = plan.model.bc
    pl, pr, sl, sr = _face_state(plan, np.asarray(p, float), np.asarray(s, float))
    ut_o = plan.trans * (pl - pr)
    ut_w = plan.trans * ((pl - physics.pc(bc, sl)) - (pr - physics.pc(bc, sr)))
    return ut_o, ut_w


def start_of_step_mass(plan: AssemblyPlan) -> tuple[float, float]:
    """(oil, water) mass in place at the step start: the first time leaf of
    every column evaluated on the injected step-start fields."""
    fluid = plan.model.fluid
    first = plan.prev < 0
    rho_w = physics.density(fluid, WATER, plan.p_start[first])
    rho_o = physics.density(fluid, OIL, plan.p_start[first])
    pv = plan.pv[first]
    s = plan.s_start[first]
    return float((pv * rho_o * (1.0 - s)).sum()), float((pv * rho_w * s).sum())


def end_of_step_mass(plan: AssemblyPlan, x: np.ndarray) -> tuple[float, float]:
    """(oil, water) mass in place on the leaves reaching the end of the step."""
    p, s, _, _ = plan.split(x)
    fluid = plan.model.fluid
    last = np.array([e.t1u == plan.mesh.ntu for e in plan.mesh.elements])
    rho_w = physics.density(fluid, WATER, p[last])
    rho_o = physics.density(fluid, OIL, p[last])
    pv = plan.pv[last]
    sw = s[last]
    return float((pv * rho_o * (1.0 - sw)).sum()), float((pv * rho_w * sw).sum())
