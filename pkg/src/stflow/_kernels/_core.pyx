# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled assembly kernels. Mirrors pure.py expression for expression;
compiled with FP contraction disabled so both backends agree exactly."""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def face_scatter_residual(
    const long long[::1] f_left,
    const long long[::1] f_right,
    const double[::1] u_o,
    const double[::1] u_w,
    double[::1] r_tot,
    double[::1] r_wat,
):
    cdef Py_ssize_t i, n = f_left.shape[0]
    cdef double u_t
    # same accumulation order as the numpy ufunc.at calls
    for i in range(n):
        r_tot[f_left[i]] += u_o[i] + u_w[i]
    for i in range(n):
        r_tot[f_right[i]] -= u_o[i] + u_w[i]
    for i in range(n):
        r_wat[f_left[i]] += u_w[i]
    for i in range(n):
        r_wat[f_right[i]] -= u_w[i]


def face_jacobian_values(
    const double[::1] trans,
    const double[::1] ut_o, const double[::1] ut_w,
    const double[::1] rho_ol, const double[::1] rho_or,
    const double[::1] drho_ol, const double[::1] drho_or,
    const double[::1] kr_o, const double[::1] dkr_ol, const double[::1] dkr_or,
    const double[::1] rho_wl, const double[::1] rho_wr,
    const double[::1] drho_wl, const double[::1] drho_wr,
    const double[::1] kr_w, const double[::1] dkr_wl, const double[::1] dkr_wr,
    const double[::1] dpc_l, const double[::1] dpc_r,
    double mu_o, double mu_w,
    double[:, ::1] out,
):
    cdef Py_ssize_t f, n = trans.shape[0]
    cdef double lam_o, do_pl, do_pr, do_sl, do_sr
    cdef double lam_w, dw_pl, dw_pr, dw_sl, dw_sr
    for f in range(n):
        lam_o = 0.5 * (rho_ol[f] + rho_or[f]) * kr_o[f] / mu_o
        do_pl = 0.5 * drho_ol[f] * kr_o[f] / mu_o * ut_o[f]
        do_pr = 0.5 * drho_or[f] * kr_o[f] / mu_o * ut_o[f]
        do_sl = 0.5 * (rho_ol[f] + rho_or[f]) * dkr_ol[f] / mu_o * ut_o[f]
        do_sr = 0.5 * (rho_ol[f] + rho_or[f]) * dkr_or[f] / mu_o * ut_o[f]
        lam_w = 0.5 * (rho_wl[f] + rho_wr[f]) * kr_w[f] / mu_w
        dw_pl = 0.5 * drho_wl[f] * kr_w[f] / mu_w * ut_w[f]
        dw_pr = 0.5 * drho_wr[f] * kr_w[f] / mu_w * ut_w[f]
        dw_sl = 0.5 * (rho_wl[f] + rho_wr[f]) * dkr_wl[f] / mu_w * ut_w[f]
        dw_sr = 0.5 * (rho_wl[f] + rho_wr[f]) * dkr_wr[f] / mu_w * ut_w[f]

        out[f, 0] = lam_o
        out[f, 1] = do_pl
        out[f, 2] = do_pr
        out[f, 3] = do_sl
        out[f, 4] = do_sr
        out[f, 5] = -lam_o
        out[f, 6] = -do_pl
        out[f, 7] = -do_pr
        out[f, 8] = -do_sl
        out[f, 9] = -do_sr
        out[f, 10] = lam_w
        out[f, 11] = dw_pl
        out[f, 12] = dw_pr
        out[f, 13] = dw_sl
        out[f, 14] = dw_sr
        out[f, 15] = -lam_w
        out[f, 16] = -dw_pl
        out[f, 17] = -dw_pr
        out[f, 18] = -dw_sl
        out[f, 19] = -dw_sr
        out[f, 20] = lam_w
        out[f, 21] = dw_pl
        out[f, 22] = dw_pr
        out[f, 23] = dw_sl
        out[f, 24] = dw_sr
        out[f, 25] = -lam_w
        out[f, 26] = -dw_pl
        out[f, 27] = -dw_pr
        out[f, 28] = -dw_sl
        out[f, 29] = -dw_sr
        out[f, 30] = 1.0
        out[f, 31] = -trans[f]
        out[f, 32] = trans[f]
        out[f, 33] = 1.0
        out[f, 34] = -trans[f]
        out[f, 35] = trans[f]
        out[f, 36] = trans[f] * dpc_l[f]
        out[f, 37] = -(trans[f] * dpc_r[f])
