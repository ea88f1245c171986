"""Numpy reference implementation of the assembly kernels.

The compiled twin in _core.pyx must keep every arithmetic expression in the
same order; tests compare the two backends exactly.
"""

import numpy as np


def face_scatter_residual(f_left, f_right, u_o, u_w, r_tot, r_wat):
    """Add per-face phase masses into the element balance rows, in face
    order: + on the left element, - on the right."""
    u_t = u_o + u_w
    np.add.at(r_tot, f_left, u_t)
    np.subtract.at(r_tot, f_right, u_t)
    np.add.at(r_wat, f_left, u_w)
    np.subtract.at(r_wat, f_right, u_w)


def face_jacobian_values(
    trans,
    ut_o, ut_w,
    rho_ol, rho_or, drho_ol, drho_or, kr_o, dkr_ol, dkr_or,
    rho_wl, rho_wr, drho_wl, drho_wr, kr_w, dkr_wl, dkr_wr,
    dpc_l, dpc_r,
    mu_o, mu_w,
    out,
):
    """Fill the 38 Jacobian slots of every interior SubFace.

    Inputs are per-face arrays; kr_* and dkr_* are already evaluated at the
    upwind saturation, with the inactive side's dkr zeroed. Slot layout:
      0-4    d(U_o)/d(Uo, P_L, P_R, S_L, S_R) into the left total row
      5-9    the same, negated, into the right total row
      10-19  d(U_w) into left/right total rows
      20-29  d(U_w) into left/right water rows
      30-32  oil constitutive row: d/d(Uo, P_L, P_R)
      33-37  water constitutive row: d/d(Uw, P_L, P_R, S_L, S_R)
    """
    lam_o = 0.5 * (rho_ol + rho_or) * kr_o / mu_o
    do_pl = 0.5 * drho_ol * kr_o / mu_o * ut_o
    do_pr = 0.5 * drho_or * kr_o / mu_o * ut_o
    do_sl = 0.5 * (rho_ol + rho_or) * dkr_ol / mu_o * ut_o
    do_sr = 0.5 * (rho_ol + rho_or) * dkr_or / mu_o * ut_o
    lam_w = 0.5 * (rho_wl + rho_wr) * kr_w / mu_w
    dw_pl = 0.5 * drho_wl * kr_w / mu_w * ut_w
    dw_pr = 0.5 * drho_wr * kr_w / mu_w * ut_w
    dw_sl = 0.5 * (rho_wl + rho_wr) * dkr_wl / mu_w * ut_w
    dw_sr = 0.5 * (rho_wl + rho_wr) * dkr_wr / mu_w * ut_w

    out[:, 0] = lam_o
    out[:, 1] = do_pl
    out[:, 2] = do_pr
    out[:, 3] = do_sl
    out[:, 4] = do_sr
    out[:, 5] = -lam_o
    out[:, 6] = -do_pl
    out[:, 7] = -do_pr
    out[:, 8] = -do_sl
    out[:, 9] = -do_sr
    out[:, 10] = lam_w
    out[:, 11] = dw_pl
    out[:, 12] = dw_pr
    out[:, 13] = dw_sl
    out[:, 14] = dw_sr
    out[:, 15] = -lam_w
    out[:, 16] = -dw_pl
    out[:, 17] = -dw_pr
    out[:, 18] = -dw_sl
    out[:, 19] = -dw_sr
    out[:, 20] = lam_w
    out[:, 21] = dw_pl
    out[:, 22] = dw_pr
    out[:, 23] = dw_sl
    out[:, 24] = dw_sr
    out[:, 25] = -lam_w
    out[:, 26] = -dw_pl
    out[:, 27] = -dw_pr
    out[:, 28] = -dw_sl
    out[:, 29] = -dw_sr
    out[:, 30] = 1.0
    out[:, 31] = -trans
    out[:, 32] = trans
    out[:, 33] = 1.0
    out[:, 34] = -trans
    out[:, 35] = trans
    out[:, 36] = trans * dpc_l
    out[:, 37] = -(trans * dpc_r)
