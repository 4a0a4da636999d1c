# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled closed-loop integrator.

Same packing, stepping and logging contract as kernels_py; see that
module for the layout.  All inner work runs on C doubles with
fixed-size stack scratch.
"""

import numpy as np

cimport cython
from libc.math cimport cos, sin, sqrt, isfinite


cdef inline double _clip0(double v) nogil:
    return v if v > 0.0 else 0.0


@cython.boundscheck(False)
@cython.wraparound(False)
cdef int _derivative(double[::1] y, double[::1] dy, Py_ssize_t half_idx,
                     double[::1] lam, double zeta_del,
                     double m, double g, double jx, double jy, double jz,
                     double jr, double lc, double kt,
                     double[::1] om2, double sigma_p, double[::1] wtip2,
                     double[:, ::1] rf, double[:, ::1] rfinv,
                     double[:, ::1] k_ctrl, double[:, ::1] a_m,
                     double[:, ::1] l_mat, double[:, ::1] pb,
                     double[:, ::1] gamma, double[::1] theta_max,
                     double[::1] eps_b, double[::1] u_trim,
                     double[:, ::1] refs, int op_enabled, double op_ch,
                     double op_dh, Py_ssize_t op_channel, Py_ssize_t op_state,
                     int use_gyro,
                     double[::1] u_cmd_out, double[::1] r_out) nogil:
    cdef double phi[21]
    cdef double ubl[4]
    cdef double u0[4]
    cdef double u_cmd[4]
    cdef double f[4]
    cdef double om[4]
    cdef double u_r[4]
    cdef double r[4]
    cdef double e[16]
    cdef double epb[4]
    cdef double acc, og_cmd, og, h, inner, gg, eta, fk
    cdef double cph, sph, cth, sth, cps, sps
    cdef double phid, thetad, psid
    cdef Py_ssize_t i, j, k, base
    cdef int n_sat = 0

    eta = y[140]
    for i in range(16):
        e[i] = y[i] - y[40 + i]
    for j in range(4):
        r[j] = refs[half_idx, j]
    if op_enabled:
        r[op_channel] = op_ch * eta + op_dh * zeta_del

    phid = y[9]
    thetad = y[10]
    psid = y[11]
    for i in range(16):
        phi[i] = y[i]
    phi[16] = phid * thetad
    phi[17] = phid * psid
    phi[18] = thetad * psid
    phi[19] = 0.0
    phi[20] = 0.0

    # baseline part, reused by both regressor passes
    for j in range(4):
        acc = 0.0
        for i in range(16):
            acc += k_ctrl[i, j] * y[i]
        ubl[j] = acc
    for j in range(4):
        acc = 0.0
        for i in range(21):
            acc += y[56 + 4 * i + j] * phi[i]
        u0[j] = u_trim[j] - ubl[j] - acc

    if use_gyro:
        for k in range(4):
            acc = 0.0
            for j in range(4):
                acc += rfinv[k, j] * u0[j]
            f[k] = acc
        og_cmd = (sqrt(_clip0(f[0]) / kt) - sqrt(_clip0(f[1]) / kt)
                  + sqrt(_clip0(f[2]) / kt) - sqrt(_clip0(f[3]) / kt))
        phi[19] = phid * og_cmd
        phi[20] = thetad * og_cmd
        for j in range(4):
            acc = 0.0
            for i in range(21):
                acc += y[56 + 4 * i + j] * phi[i]
            u_cmd[j] = u_trim[j] - ubl[j] - acc
    else:
        for j in range(4):
            u_cmd[j] = u0[j]

    for k in range(4):
        acc = 0.0
        for j in range(4):
            acc += rfinv[k, j] * (lam[j] * u_cmd[j])
        if acc < 0.0:
            n_sat += 1
            acc = 0.0
        f[k] = acc
        om[k] = sqrt(acc / kt)
    og = om[0] - om[1] + om[2] - om[3]
    for j in range(4):
        acc = 0.0
        for k in range(4):
            acc += rf[j, k] * f[k]
        u_r[j] = acc

    cph = cos(y[3]); sph = sin(y[3])
    cth = cos(y[4]); sth = sin(y[4])
    cps = cos(y[5]); sps = sin(y[5])
    for i in range(6):
        dy[i] = y[6 + i]
    dy[6] = (cps * sth * cph + sps * sph) * u_r[0] / m
    dy[7] = (sps * sth * cph - cps * sph) * u_r[0] / m
    dy[8] = -g + cth * cph * u_r[0] / m
    dy[9] = thetad * psid * (jy - jz) / jx - jr / jx * thetad * og + lc / jx * u_r[1]
    dy[10] = phid * psid * (jz - jx) / jy + jr / jy * phid * og + lc / jy * u_r[2]
    dy[11] = phid * thetad * (jx - jy) / jz + u_r[3] / jz
    dy[12] = y[0] - r[0]
    dy[13] = y[1] - r[1]
    dy[14] = y[2] - r[2]
    dy[15] = y[5] - r[3]

    for k in range(4):
        base = 16 + 6 * k
        fk = f[k]
        for j in range(3):
            dy[base + 2 * j] = y[base + 2 * j + 1]
            dy[base + 2 * j + 1] = (-om2[j] * y[base + 2 * j]
                                    - sigma_p * y[base + 2 * j + 1]
                                    + wtip2[j] * fk)

    for i in range(16):
        acc = 0.0
        for j in range(16):
            acc += a_m[i, j] * y[40 + j]
        for j in range(16):
            acc -= l_mat[i, j] * e[j]
        dy[40 + i] = acc
    for j in range(4):
        dy[52 + j] -= r[j]

    for j in range(4):
        acc = 0.0
        for i in range(16):
            acc += e[i] * pb[i, j]
        epb[j] = acc

    cdef double tj_sq, yj
    cdef double grad_i
    for j in range(4):
        tj_sq = 0.0
        for i in range(21):
            tj_sq += y[56 + 4 * i + j] * y[56 + 4 * i + j]
        h = (tj_sq - theta_max[j] * theta_max[j]) / eps_b[j]
        if h > 0.0:
            inner = 0.0
            gg = 0.0
            for i in range(21):
                grad_i = 2.0 * y[56 + 4 * i + j] / eps_b[j]
                inner += phi[i] * epb[j] * grad_i
                gg += grad_i * grad_i
            if inner > 0.0 and gg > 0.0:
                for i in range(21):
                    grad_i = 2.0 * y[56 + 4 * i + j] / eps_b[j]
                    yj = phi[i] * epb[j] - grad_i * (inner * h / gg)
                    dy[56 + 4 * i + j] = gamma[i, j] * yj
            else:
                for i in range(21):
                    dy[56 + 4 * i + j] = gamma[i, j] * phi[i] * epb[j]
        else:
            for i in range(21):
                dy[56 + 4 * i + j] = gamma[i, j] * phi[i] * epb[j]

    dy[140] = zeta_del if op_enabled else 0.0

    for j in range(4):
        u_cmd_out[j] = u_cmd[j]
        r_out[j] = r[j]
    return n_sat


def run_closed_loop(y0, Py_ssize_t n_steps, double dt, params, om2_in, double sigma_p,
                    wtip2_in, rf_in, rfinv_in, k_ctrl_in, a_m_in, l_mat_in,
                    pb_in, gamma_in, theta_max_in, eps_b_in, lam_nominal_in,
                    lam_anomaly_in, Py_ssize_t anomaly_step, u_trim_in, refs_in,
                    int op_enabled, double op_ch, double op_dh,
                    Py_ssize_t op_channel, Py_ssize_t op_state,
                    Py_ssize_t delay_steps, int use_gyro):
    cdef double m = params[0], g = params[1], jx = params[2], jy = params[3]
    cdef double jz = params[4], jr = params[5], lc = params[6], kt = params[7]
    cdef double[::1] om2 = np.ascontiguousarray(om2_in, dtype=np.float64)
    cdef double[::1] wtip2 = np.ascontiguousarray(wtip2_in, dtype=np.float64)
    cdef double[:, ::1] rf = np.ascontiguousarray(rf_in, dtype=np.float64)
    cdef double[:, ::1] rfinv = np.ascontiguousarray(rfinv_in, dtype=np.float64)
    cdef double[:, ::1] k_ctrl = np.ascontiguousarray(k_ctrl_in, dtype=np.float64)
    cdef double[:, ::1] a_m = np.ascontiguousarray(a_m_in, dtype=np.float64)
    cdef double[:, ::1] l_mat = np.ascontiguousarray(l_mat_in, dtype=np.float64)
    cdef double[:, ::1] pb = np.ascontiguousarray(pb_in, dtype=np.float64)
    cdef double[:, ::1] gamma = np.ascontiguousarray(gamma_in, dtype=np.float64)
    cdef double[::1] theta_max = np.ascontiguousarray(theta_max_in, dtype=np.float64)
    cdef double[::1] eps_b = np.ascontiguousarray(eps_b_in, dtype=np.float64)
    cdef double[::1] lam_nom = np.ascontiguousarray(lam_nominal_in, dtype=np.float64)
    cdef double[::1] lam_anom = np.ascontiguousarray(lam_anomaly_in, dtype=np.float64)
    cdef double[::1] u_trim = np.ascontiguousarray(u_trim_in, dtype=np.float64)
    cdef double[:, ::1] refs = np.ascontiguousarray(refs_in, dtype=np.float64)

    y_log_np = np.empty((n_steps + 1, 141))
    u_log_np = np.empty((n_steps + 1, 4))
    r_log_np = np.empty((n_steps + 1, 4))
    sat_log_np = np.zeros(n_steps + 1, dtype=np.int64)
    zeta_np = np.zeros((n_steps + 1, 4))
    cdef double[:, ::1] y_log = y_log_np
    cdef double[:, ::1] u_log = u_log_np
    cdef double[:, ::1] r_log = r_log_np
    cdef long long[::1] sat_log = sat_log_np
    cdef double[:, ::1] zeta_stages = zeta_np

    y_np = np.array(y0, dtype=np.float64, copy=True)
    scratch_np = np.zeros((6, 141))
    cdef double[::1] y = y_np
    cdef double[:, ::1] w = scratch_np     # k1..k4 and stage states
    cdef double[::1] u_c = np.zeros(4)
    cdef double[::1] r_c = np.zeros(4)
    cdef double[::1] u_dump = np.zeros(4)
    cdef double[::1] r_dump = np.zeros(4)
    cdef double[::1] lam
    cdef double zd0, zd1, zd2, zd3
    cdef Py_ssize_t i, q, last = n_steps
    cdef int status = 0, s1, s2, s3, s4
    cdef int finite_ok

    for i in range(n_steps):
        lam = lam_anom if i >= anomaly_step else lam_nom
        if op_enabled and i >= delay_steps:
            zd0 = zeta_stages[i - delay_steps, 0]
            zd1 = zeta_stages[i - delay_steps, 1]
            zd2 = zeta_stages[i - delay_steps, 2]
            zd3 = zeta_stages[i - delay_steps, 3]
        else:
            zd0 = zd1 = zd2 = zd3 = 0.0
        s1 = _derivative(y, w[0], 2 * i, lam, zd0, m, g, jx, jy, jz, jr, lc, kt,
                         om2, sigma_p, wtip2, rf, rfinv, k_ctrl, a_m, l_mat, pb,
                         gamma, theta_max, eps_b, u_trim, refs, op_enabled,
                         op_ch, op_dh, op_channel, op_state, use_gyro, u_c, r_c)
        for q in range(141):
            w[4, q] = y[q] + 0.5 * dt * w[0, q]
        s2 = _derivative(w[4], w[1], 2 * i + 1, lam, zd1, m, g, jx, jy, jz, jr, lc, kt,
                         om2, sigma_p, wtip2, rf, rfinv, k_ctrl, a_m, l_mat, pb,
                         gamma, theta_max, eps_b, u_trim, refs, op_enabled,
                         op_ch, op_dh, op_channel, op_state, use_gyro, u_dump, r_dump)
        if op_enabled:
            zeta_stages[i, 1] = refs[2 * i + 1, op_channel] - w[4, op_state]
        for q in range(141):
            w[5, q] = y[q] + 0.5 * dt * w[1, q]
        s3 = _derivative(w[5], w[2], 2 * i + 1, lam, zd2, m, g, jx, jy, jz, jr, lc, kt,
                         om2, sigma_p, wtip2, rf, rfinv, k_ctrl, a_m, l_mat, pb,
                         gamma, theta_max, eps_b, u_trim, refs, op_enabled,
                         op_ch, op_dh, op_channel, op_state, use_gyro, u_dump, r_dump)
        if op_enabled:
            zeta_stages[i, 2] = refs[2 * i + 1, op_channel] - w[5, op_state]
        for q in range(141):
            w[4, q] = y[q] + dt * w[2, q]
        s4 = _derivative(w[4], w[3], 2 * i + 2, lam, zd3, m, g, jx, jy, jz, jr, lc, kt,
                         om2, sigma_p, wtip2, rf, rfinv, k_ctrl, a_m, l_mat, pb,
                         gamma, theta_max, eps_b, u_trim, refs, op_enabled,
                         op_ch, op_dh, op_channel, op_state, use_gyro, u_dump, r_dump)
        if op_enabled:
            zeta_stages[i, 0] = refs[2 * i, op_channel] - y[op_state]
            zeta_stages[i, 3] = refs[2 * i + 2, op_channel] - w[4, op_state]
        for q in range(141):
            y_log[i, q] = y[q]
        for q in range(4):
            u_log[i, q] = u_c[q]
            r_log[i, q] = r_c[q]
        sat_log[i] = s1 + s2 + s3 + s4
        finite_ok = 1
        for q in range(141):
            y[q] = y[q] + (dt / 6.0) * (w[0, q] + 2.0 * w[1, q] + 2.0 * w[2, q] + w[3, q])
            if not isfinite(y[q]):
                finite_ok = 0
        if not finite_ok:
            status = 1
            last = i
            y_log_np[i + 1:] = np.nan
            u_log_np[i + 1:] = np.nan
            r_log_np[i + 1:] = np.nan
            break

    if status == 0:
        lam = lam_anom if n_steps >= anomaly_step else lam_nom
        if op_enabled and n_steps >= delay_steps:
            zd0 = zeta_stages[n_steps - delay_steps, 0]
        else:
            zd0 = 0.0
        s1 = _derivative(y, w[0], 2 * n_steps, lam, zd0, m, g, jx, jy, jz, jr, lc, kt,
                         om2, sigma_p, wtip2, rf, rfinv, k_ctrl, a_m, l_mat, pb,
                         gamma, theta_max, eps_b, u_trim, refs, op_enabled,
                         op_ch, op_dh, op_channel, op_state, use_gyro, u_c, r_c)
        for q in range(141):
            y_log[n_steps, q] = y[q]
        for q in range(4):
            u_log[n_steps, q] = u_c[q]
            r_log[n_steps, q] = r_c[q]
        sat_log[n_steps] = s1

    return y_log_np, u_log_np, r_log_np, sat_log_np, status, last
