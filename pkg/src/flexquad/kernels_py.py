"""Pure-Python closed-loop integrator (reference backend).

Fixed-step classic Runge-Kutta over the packed state vector

    y[0:12]    rigid states (x, y, z, phi, theta, psi, derivatives)
    y[12:16]   integral tracking error e_p
    y[16:40]   arm bending states, arm-major (z1, z1', z2, z2', z3, z3')
    y[40:56]   reference model state x_m
    y[56:140]  adaptive weights theta_hat, row-major (16 + 5, 4)
    y[140]     operator integrator eta

Per derivative evaluation: the commanded input is trim plus baseline
plus adaptive feedback; the gyroscopic regressor entries use rotor
speeds reconstructed from the commanded (pre-anomaly) forces in a
two-pass evaluation; the plant sees the commanded input scaled by the
effectiveness diagonal, with negative rotor forces clipped at zero and
counted as saturation events.  External references are supplied on the
half grid (stage times) so both backends consume identical samples.
The compiled backend mirrors this file operation for operation.
"""

from __future__ import annotations

import numpy as np

N_STATE = 141
N_THETA = 21


def run_closed_loop(y0, n_steps, dt, params, om2, sigma_p, wtip2,
                    rf, rfinv, k_ctrl, a_m, l_mat, pb, gamma,
                    theta_max, eps_b, lam_nominal, lam_anomaly, anomaly_step,
                    u_trim, refs, op_enabled, op_ch, op_dh, op_channel,
                    op_state, delay_steps, use_gyro):
    """Integrate the closed loop for n_steps of size dt.

    Returns (y_log, u_log, r_log, sat_log, status, last_step): status 0
    on success, 1 if the state went non-finite after step last_step.
    """
    m, g, jx, jy, jz, jr, lc, kt = params
    y = np.array(y0, dtype=float, copy=True)
    y_log = np.empty((n_steps + 1, N_STATE))
    u_log = np.empty((n_steps + 1, 4))
    r_log = np.empty((n_steps + 1, 4))
    sat_log = np.zeros(n_steps + 1, dtype=np.int64)
    zeta_stages = np.zeros((n_steps + 1, 4))

    def derivative(step_y, half_idx, lam, zeta_del):
        x = step_y[:16]
        ze = step_y[16:40]
        xm = step_y[40:56]
        th = step_y[56:140].reshape(N_THETA, 4)
        eta = step_y[140]
        e = x - xm
        r = refs[half_idx].copy()
        if op_enabled:
            r[op_channel] = op_ch * eta + op_dh * zeta_del
        phid, thetad, psid = step_y[9], step_y[10], step_y[11]
        phi = np.empty(N_THETA)
        phi[:16] = x
        phi[16] = phid * thetad
        phi[17] = phid * psid
        phi[18] = thetad * psid
        phi[19] = 0.0
        phi[20] = 0.0
        u0 = u_trim - k_ctrl.T @ x - th.T @ phi
        if use_gyro:
            f_cmd = rfinv @ u0
            om_cmd = np.sqrt(np.maximum(f_cmd, 0.0) / kt)
            og_cmd = om_cmd[0] - om_cmd[1] + om_cmd[2] - om_cmd[3]
            phi[19] = phid * og_cmd
            phi[20] = thetad * og_cmd
            u_cmd = u_trim - k_ctrl.T @ x - th.T @ phi
        else:
            u_cmd = u0
        u_eff = lam * u_cmd
        f_eff = rfinv @ u_eff
        n_sat = int(np.count_nonzero(f_eff < 0.0))
        f_clip = np.maximum(f_eff, 0.0)
        om = np.sqrt(f_clip / kt)
        og = om[0] - om[1] + om[2] - om[3]
        u_r = rf @ f_clip

        cph, sph = np.cos(step_y[3]), np.sin(step_y[3])
        cth, sth = np.cos(step_y[4]), np.sin(step_y[4])
        cps, sps = np.cos(step_y[5]), np.sin(step_y[5])
        dy = np.empty(N_STATE)
        dy[0:6] = step_y[6:12]
        dy[6] = (cps * sth * cph + sps * sph) * u_r[0] / m
        dy[7] = (sps * sth * cph - cps * sph) * u_r[0] / m
        dy[8] = -g + cth * cph * u_r[0] / m
        dy[9] = (thetad * psid * (jy - jz) / jx - jr / jx * thetad * og
                 + lc / jx * u_r[1])
        dy[10] = (phid * psid * (jz - jx) / jy + jr / jy * phid * og
                  + lc / jy * u_r[2])
        dy[11] = phid * thetad * (jx - jy) / jz + u_r[3] / jz
        # integral of tracking error over (x, y, z, psi)
        dy[12] = step_y[0] - r[0]
        dy[13] = step_y[1] - r[1]
        dy[14] = step_y[2] - r[2]
        dy[15] = step_y[5] - r[3]
        for k in range(4):
            base = 16 + 6 * k
            fk = f_clip[k]
            for j in range(3):
                dy[base + 2 * j] = step_y[base + 2 * j + 1]
                dy[base + 2 * j + 1] = (-om2[j] * step_y[base + 2 * j]
                                        - sigma_p * step_y[base + 2 * j + 1]
                                        + wtip2[j] * fk)
        dxm = a_m @ xm - l_mat @ e
        dxm[12:16] -= r
        dy[40:56] = dxm
        epb = e @ pb
        raw = np.outer(phi, epb)
        dth = np.empty((N_THETA, 4))
        for j in range(4):
            yj = raw[:, j]
            tj = th[:, j]
            h = (tj @ tj - theta_max[j] ** 2) / eps_b[j]
            if h > 0.0:
                grad = 2.0 * tj / eps_b[j]
                inner = yj @ grad
                if inner > 0.0:
                    yj = yj - grad * (inner * h / (grad @ grad))
            dth[:, j] = gamma[:, j] * yj
        dy[56:140] = dth.ravel()
        dy[140] = zeta_del if op_enabled else 0.0
        return dy, u_cmd, r, n_sat

    zero4 = np.zeros(4)
    status = 0
    last = n_steps
    for i in range(n_steps):
        lam = lam_anomaly if i >= anomaly_step else lam_nominal
        if op_enabled and i >= delay_steps:
            zdel = zeta_stages[i - delay_steps]
        else:
            zdel = zero4
        h0, h1, h2 = 2 * i, 2 * i + 1, 2 * i + 2
        k1, u_c, r_c, s1 = derivative(y, h0, lam, zdel[0])
        y2 = y + 0.5 * dt * k1
        k2, _, _, s2 = derivative(y2, h1, lam, zdel[1])
        y3 = y + 0.5 * dt * k2
        k3, _, _, s3 = derivative(y3, h1, lam, zdel[2])
        y4 = y + dt * k3
        k4, _, _, s4 = derivative(y4, h2, lam, zdel[3])
        if op_enabled:
            zeta_stages[i, 0] = refs[h0, op_channel] - y[op_state]
            zeta_stages[i, 1] = refs[h1, op_channel] - y2[op_state]
            zeta_stages[i, 2] = refs[h1, op_channel] - y3[op_state]
            zeta_stages[i, 3] = refs[h2, op_channel] - y4[op_state]
        y_log[i] = y
        u_log[i] = u_c
        r_log[i] = r_c
        sat_log[i] = s1 + s2 + s3 + s4
        y = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.isfinite(y).all():
            status = 1
            last = i
            y_log[i + 1:] = np.nan
            u_log[i + 1:] = np.nan
            r_log[i + 1:] = np.nan
            break
    if status == 0:
        lam = lam_anomaly if n_steps >= anomaly_step else lam_nominal
        if op_enabled and n_steps >= delay_steps:
            zdel = zeta_stages[n_steps - delay_steps]
        else:
            zdel = zero4
        _, u_c, r_c, s1 = derivative(y, 2 * n_steps, lam, zdel[0])
        y_log[n_steps] = y
        u_log[n_steps] = u_c
        r_log[n_steps] = r_c
        sat_log[n_steps] = s1
    return y_log, u_log, r_log, sat_log, status, last
