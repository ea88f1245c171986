"""Error indicators and refinement marking.

Six per-element, per-phase indicators quantify how well a space-time
solution resolves the flow:

* residual pair ``eta_t_r`` / ``eta_s_r``: the strong-form mass residual
  density integrated over the element, weighted by the length of the time
  interval (temporal) or the cell volume (spatial);
* flux pair ``eta_t_f`` / ``eta_s_f``: the change of the upwinded phase
  velocity across the element's own time interval, and the gap between
  the upwinded and the locally evaluated phase velocity;
* nonconformity pair ``eta_t_p`` / ``eta_s_p``: the temporal analogue for
  the auxiliary flux, and the tangential jumps of K^-1 u across interior
  interfaces.

Two saturation-gradient indicators separate genuine front motion from
benign pressure-driven flux growth: the temporal rate ``eps_t`` and the
side-wise spatial difference quotient ``eps_s``.  Refinement thresholds
are fitted per indicator from the log10 distribution of the normalized
values inside the [0.01, 1] window.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import assembly, physics
from .mesh import SpaceTimeMesh, State
from .physics import OIL, WATER

INDICATOR_NAMES = ("eta_t_r", "eta_s_r", "eta_t_f", "eta_s_f", "eta_t_p", "eta_s_p")


@dataclass
class IndicatorField:
    """Raw (unnormalized) indicator values on one mesh.

    The eta arrays are (n_elements, 2) with the phase on the second axis;
    eps_t / eps_s are per element and attached once the saturation
    gradients are available.
    """

    mesh: SpaceTimeMesh
    eta_t_r: np.ndarray
    eta_s_r: np.ndarray
    eta_t_f: np.ndarray
    eta_s_f: np.ndarray
    eta_t_p: np.ndarray
    eta_s_p: np.ndarray
    eps_t: np.ndarray | None = None
    eps_s: np.ndarray | None = None

    def normalized(self, name: str) -> np.ndarray:
        """Per-element values scaled so the largest entry is 1; per-phase
        fields are normalized phase by phase, then merged by maximum."""
        raw = getattr(self, name)
        if raw is None:
            raise ValueError(f"indicator {name} has not been attached")
        if raw.ndim == 1:
            top = float(raw.max()) if raw.size else 0.0
            return raw / top if top > 0.0 else np.zeros_like(raw)
        out = np.zeros(raw.shape[0])
        for phase in (WATER, OIL):
            top = float(raw[:, phase].max()) if raw.shape[0] else 0.0
            if top > 0.0:
                np.maximum(out, raw[:, phase] / top, out=out)
        return out


@dataclass(frozen=True)
class ThresholdFit:
    """Log-normal fit of normalized indicator values in [0.01, 1]."""

    mu_log: float
    sigma_log: float
    theta_mean: float
    theta_hi: float
    n_window: int


def fit_thresholds(values) -> ThresholdFit:
    """Fit marking thresholds from one indicator's normalized values.

    Values below 0.01 are noise and are discarded. theta_mean is 10 to the
    mean of log10 of the rest, theta_hi one standard deviation above.
    Fewer than two surviving values cannot support a fit; the sentinel
    thresholds of 1.0 mark nothing (comparisons are strict).
    """
    v = np.asarray(values, dtype=float)
    window = v[(v >= 0.01) & (v <= 1.0)]
    if window.size < 2:
        return ThresholdFit(0.0, 0.0, 1.0, 1.0, int(window.size))
    lg = np.log10(window)
    mu = float(lg.mean())
    sigma = float(lg.std())
    return ThresholdFit(mu, sigma, 10.0 ** mu, 10.0 ** (mu + sigma), int(window.size))


# -- flux reconstruction ------------------------------------------------------

_WEST, _EAST, _SOUTH, _NORTH = 0, 1, 2, 3


def _side_densities(n_el, f_left, f_right, orient, meas, val_left, val_right):
    """Measure-weighted mean density per element side.

    val_left / val_right are integrated face quantities as seen from the
    two adjacent elements (positive along +x or +y). Sides with no
    interior faces stay 0: the domain boundary carries no flow.
    """
    num = np.zeros((n_el, 4))
    den = np.zeros((n_el, 4))
    side_l = np.where(orient == 0, _EAST, _NORTH)
    side_r = np.where(orient == 0, _WEST, _SOUTH)
    np.add.at(num, (f_left, side_l), val_left)
    np.add.at(den, (f_left, side_l), meas)
    np.add.at(num, (f_right, side_r), val_right)
    np.add.at(den, (f_right, side_r), meas)
    safe = np.where(den > 0.0, den, 1.0)
    return np.where(den > 0.0, num / safe, 0.0)


def _cell_vectors(dens):
    vx = 0.5 * (dens[:, _WEST] + dens[:, _EAST])
    vy = 0.5 * (dens[:, _SOUTH] + dens[:, _NORTH])
    return vx, vy


def temporal_flux_indicator(volume, duration, inv_kx, inv_ky, du_x, du_y):
    """Closed form of the temporal flux indicator: the time-linear
    interpolant of the flux difference integrated over the element,
    sqrt(V * K^-1 |u_end - u_start|^2 * dt / 3)."""
    return np.sqrt(volume * duration / 3.0 * (inv_kx * du_x ** 2 + inv_ky * du_y ** 2))


def spatial_flux_indicator(volume, duration, inv_kx, inv_ky, d_x, d_y):
    """sqrt(V * dt * K^-1 |d|^2) for a time-constant flux gap d."""
    return np.sqrt(volume * duration * (inv_kx * d_x ** 2 + inv_ky * d_y ** 2))


def compute_estimators(plan: assembly.AssemblyPlan, x: np.ndarray) -> IndicatorField:
    """Evaluate the six indicators at the state x.

    Start-of-interval fluxes come from the time predecessor where one
    exists; a column's first leaf uses virtual fluxes obtained by pushing
    the step-start fields through the constitutive relation on the current
    faces.
    """
    fluid, bc = plan.model.fluid, plan.model.bc
    n = plan.n_el
    p, s, ut_o, ut_w = plan.split(x)
    fl, fr, orient, meas = plan.f_left, plan.f_right, plan.orient, plan.meas

    inv_kx = np.divide(1.0, plan.kx, out=np.zeros(n), where=plan.kx > 0.0)
    inv_ky = np.divide(1.0, plan.ky, out=np.zeros(n), where=plan.ky > 0.0)

    # residual pair: the discrete mass rows as a space-time density
    r = assembly.assemble_residual(plan, x)
    r_wat = r[n:2 * n]
    r_oil = r[:n] - r_wat
    vdt = plan.vol * plan.dt
    root = np.sqrt(vdt)
    eta_t_r = np.empty((n, 2))
    eta_s_r = np.empty((n, 2))
    for phase, disc in ((WATER, r_wat), (OIL, r_oil)):
        dens = np.abs(disc) / vdt
        eta_t_r[:, phase] = plan.dt * dens * root
        eta_s_r[:, phase] = plan.vol * dens * root

    pl, pr, sl, sr = p[fl], p[fr], s[fl], s[fr]
    ut0_o, ut0_w = assembly.constitutive_fluxes(plan, plan.p_start, plan.s_start)
    p0l, p0r = plan.p_start[fl], plan.p_start[fr]
    s0l, s0r = plan.s_start[fl], plan.s_start[fr]

    prev = plan.prev
    has = prev >= 0
    safe_prev = np.maximum(prev, 0)

    eta_t_f = np.empty((n, 2))
    eta_s_f = np.empty((n, 2))
    eta_t_p = np.empty((n, 2))
    eta_s_p = np.empty((n, 2))
    for phase, ut, ut0 in ((WATER, ut_w, ut0_w), (OIL, ut_o, ut0_o)):
        lam_up = physics.upwind_mobility(fluid, bc, phase, ut, pl, pr, sl, sr)
        u_end = lam_up * ut
        lam0 = physics.upwind_mobility(fluid, bc, phase, ut0, p0l, p0r, s0l, s0r)
        u_virt = lam0 * ut0

        ex, ey = _cell_vectors(_side_densities(n, fl, fr, orient, meas, u_end, u_end))
        vx, vy = _cell_vectors(_side_densities(n, fl, fr, orient, meas, u_virt, u_virt))
        sx = np.where(has, ex[safe_prev], vx)
        sy = np.where(has, ey[safe_prev], vy)
        eta_t_f[:, phase] = temporal_flux_indicator(
            plan.vol, plan.dt, inv_kx, inv_ky, ex - sx, ey - sy
        )

        tx, ty = _cell_vectors(_side_densities(n, fl, fr, orient, meas, ut, ut))
        tx0, ty0 = _cell_vectors(_side_densities(n, fl, fr, orient, meas, ut0, ut0))
        sx = np.where(has, tx[safe_prev], tx0)
        sy = np.where(has, ty[safe_prev], ty0)
        eta_t_p[:, phase] = temporal_flux_indicator(
            plan.vol, plan.dt, inv_kx, inv_ky, tx - sx, ty - sy
        )

        # upwinded minus locally evaluated mobility, per adjacent cell
        rho_face = 0.5 * (
            physics.density(fluid, phase, pl) + physics.density(fluid, phase, pr)
        )
        lam_l = rho_face * physics.kr(bc, phase, sl) / fluid.mu[phase]
        lam_r = rho_face * physics.kr(bc, phase, sr) / fluid.mu[phase]
        gx, gy = _cell_vectors(
            _side_densities(
                n, fl, fr, orient, meas, (lam_up - lam_l) * ut, (lam_up - lam_r) * ut
            )
        )
        eta_s_f[:, phase] = spatial_flux_indicator(
            plan.vol, plan.dt, inv_kx, inv_ky, gx, gy
        )

        # tangential jumps of K^-1 u~ across interior faces; the element
        # curl term is identically zero for the cellwise-constant field
        wx = tx * inv_kx
        wy = ty * inv_ky
        tang = np.where(orient == 0, wy[fl] - wy[fr], wx[fl] - wx[fr])
        term = (meas * tang) ** 2
        acc = np.zeros(n)
        np.add.at(acc, fl, term)
        np.add.at(acc, fr, term)
        eta_s_p[:, phase] = np.sqrt(acc)

    return IndicatorField(plan.mesh, eta_t_r, eta_s_r, eta_t_f, eta_s_f, eta_t_p, eta_s_p)


# -- saturation gradients -----------------------------------------------------


def spatial_saturation_gradient(mesh: SpaceTimeMesh, s) -> np.ndarray:
    """Largest side-wise one-sided difference quotient of S_w per element.

    Each side averages |dS| / center-distance over its sub-faces with
    measure weights; boundary sides contribute nothing (no-flow)."""
    n = mesh.n_elements
    sfs = mesh.subfaces
    m = len(sfs)
    if m == 0:
        return np.zeros(n)
    fl = np.fromiter((f.left for f in sfs), np.int64, m)
    fr = np.fromiter((f.right for f in sfs), np.int64, m)
    orient = np.fromiter((f.orient for f in sfs), np.int64, m)
    meas = np.fromiter((f.measure for f in sfs), float, m)
    cx = np.fromiter((e.cx for e in mesh.elements), float, n)
    cy = np.fromiter((e.cy for e in mesh.elements), float, n)
    s = np.asarray(s, dtype=float)
    dist = np.where(orient == 0, np.abs(cx[fl] - cx[fr]), np.abs(cy[fl] - cy[fr]))
    quot = np.abs(s[fl] - s[fr]) / dist
    dens = _side_densities(n, fl, fr, orient, meas, meas * quot, meas * quot)
    return dens.max(axis=1)


def combine_gradient(current, previous):
    """Two-branch merge with the previous step's gradient at the same
    location: keep the current value where it dominates, average
    otherwise."""
    current = np.asarray(current, dtype=float)
    previous = np.asarray(previous, dtype=float)
    return np.where(current > previous, current, 0.5 * (current + previous))


def gradient_raster(state: State) -> np.ndarray:
    """Paint each column's end-of-step gradient onto the finest grid."""
    mesh = state.mesh
    g = spatial_saturation_gradient(mesh, state.s)
    out = np.zeros((mesh.nxu, mesh.nyu))
    for e in mesh.elements:
        if e.t1u == mesh.ntu:
            out[e.x0u:e.x0u + e.wu, e.y0u:e.y0u + e.wu] = g[e.index]
    return out


def _raster_lookup(mesh: SpaceTimeMesh, raster: np.ndarray) -> np.ndarray:
    vals = np.empty(mesh.n_elements)
    for e in mesh.elements:
        vals[e.index] = raster[e.x0u:e.x0u + e.wu, e.y0u:e.y0u + e.wu].mean()
    return vals


def saturation_gradients(
    plan: assembly.AssemblyPlan, x: np.ndarray, prev_step_state: State | None = None
):
    """(eps_t, eps_s) per element at the state x.

    eps_t differences each element against its time predecessor (the
    step-start field for a column's first leaf) over its own interval.
    eps_s merges the current spatial gradient with the previous coarse
    step's end-of-step gradient looked up on the finest raster; on the
    first step (prev_step_state None) the current gradient stands alone.
    """
    _, s, _, _ = plan.split(x)
    prev = plan.prev
    has = prev >= 0
    s_before = np.where(has, s[np.maximum(prev, 0)], plan.s_start)
    eps_t = np.abs(s - s_before) / plan.dt

    g_cur = spatial_saturation_gradient(plan.mesh, s)
    if prev_step_state is None:
        return eps_t, g_cur
    g_prev = _raster_lookup(plan.mesh, gradient_raster(prev_step_state))
    return eps_t, combine_gradient(g_cur, g_prev)


# -- marking ------------------------------------------------------------------


def mark_temporal(ind: IndicatorField, fit_f: ThresholdFit, fit_e: ThresholdFit) -> set:
    """Element keys whose temporal flux indicator and saturation rate both
    exceed their log-mean thresholds; leaves at the temporal cap stay.

    Requiring both filters out the benign case of a large flux indicator
    driven purely by a steep pressure gradient around a well."""
    mesh = ind.mesh
    nf = ind.normalized("eta_t_f")
    ne = ind.normalized("eps_t")
    out = set()
    for e in mesh.elements:
        if e.level_t >= mesh.lt_max:
            continue
        if nf[e.index] > fit_f.theta_mean and ne[e.index] > fit_e.theta_mean:
            out.add(e.key)
    return out


def mark_spatial(
    ind: IndicatorField,
    fit_f: ThresholdFit,
    fit_e: ThresholdFit,
    wells=(),
) -> set:
    """Element keys with a spatial saturation gradient above its log-mean
    threshold or a spatial flux indicator a standard deviation above;
    well-bearing columns are always marked until they reach the spatial
    cap."""
    mesh = ind.mesh
    nf = ind.normalized("eta_s_f")
    ne = ind.normalized("eps_s")
    well_cols = {mesh.column_at_point(w.x, w.y) for w in wells}
    out = set()
    for e in mesh.elements:
        if e.level_s >= mesh.ls_max:
            continue
        col = (e.level_s, e.ci, e.cj)
        if (
            col in well_cols
            or ne[e.index] > fit_e.theta_mean
            or nf[e.index] > fit_f.theta_hi
        ):
            out.add(e.key)
    return out


def mark_residual_region(ind: IndicatorField) -> set:
    """Initial-guess residual screening, used once per step on the
    coarsest pass: temporal-residual values above their own log-mean
    threshold outline the main refinement region."""
    v = ind.normalized("eta_t_r")
    fit = fit_thresholds(v)
    mesh = ind.mesh
    return {
        e.key
        for e in mesh.elements
        if e.level_t < mesh.lt_max and v[e.index] > fit.theta_mean
    }
