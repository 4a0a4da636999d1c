"""Baseline and adaptive control laws with a closed-loop reference model.

The baseline gain is a linear-quadratic design on the augmented hover
model; the adaptive layer estimates a weight matrix acting on a
regressor of states and angular-rate products, updated by a Lyapunov
law with per-column projection onto smoothed norm balls.  The reference
model optionally feeds back the tracking error (gain -L e) to damp
adaptation transients; with L = 0 the classical open-loop reference
model is recovered.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg as sla

from .errors import ConfigError, DesignError, SolverError

N_BILINEAR = 5  # phid*thetad, phid*psid, thetad*psid, phid*Og, thetad*Og


def design_baseline_gain(a, b, state_weights, control_weights):
    """LQR state-feedback gain K for u = -K^T x.

    state_weights / control_weights are the diagonals of the quadratic
    cost.  Raises DesignError when the pair cannot be stabilized.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if not np.any(b):
        raise DesignError("input matrix is zero")
    q = np.diag(np.asarray(state_weights, dtype=float))
    r = np.diag(np.asarray(control_weights, dtype=float))
    try:
        p = sla.solve_continuous_are(a, b, q, r)
    except Exception as exc:
        raise DesignError(f"Riccati solve failed: {exc}") from exc
    k = np.linalg.solve(r, b.T @ p).T
    if np.max(np.linalg.eigvals(a - b @ k.T).real) >= 0.0:
        raise DesignError("designed gain does not stabilize the plant")
    return k


def lyapunov_solve(m, q, residual_tol: float = 1e-9) -> np.ndarray:
    """Unique SPD solution P of M^T P + P M = -Q for Hurwitz M."""
    m = np.asarray(m, dtype=float)
    q = np.asarray(q, dtype=float)
    if np.max(np.linalg.eigvals(m).real) >= 0.0:
        raise SolverError("Lyapunov solve requires a Hurwitz matrix")
    p = sla.solve_continuous_lyapunov(m.T, -q)
    p = 0.5 * (p + p.T)
    resid = np.linalg.norm(m.T @ p + p @ m + q)
    if resid >= residual_tol:
        raise SolverError(f"Lyapunov residual {resid:.3e} above {residual_tol:g}")
    if np.min(np.linalg.eigvalsh(p)) <= 0.0:
        raise SolverError("Lyapunov solution is not positive definite")
    return p


def regressor(x, omega_g: float = 0.0, include_gyro: bool = True) -> np.ndarray:
    """Regressor [x, phid*thetad, phid*psid, thetad*psid, phid*Og, thetad*Og].

    x is the augmented state (rigid 12 + integral 4); the rate products
    use indices 9..11.  With include_gyro=False the two gyroscopic
    products are dropped.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    phid, thetad, psid = x[9], x[10], x[11]
    n_s = N_BILINEAR if include_gyro else N_BILINEAR - 2
    phi = np.empty(n + n_s)
    phi[:n] = x
    phi[n] = phid * thetad
    phi[n + 1] = phid * psid
    phi[n + 2] = thetad * psid
    if include_gyro:
        phi[n + 3] = phid * omega_g
        phi[n + 4] = thetad * omega_g
    return phi


@dataclass(frozen=True)
class NormBallBound:
    """Smoothed norm-ball h(theta) = (|theta|^2 - radius^2) / band.

    band = ((1 + tolerance)^2 - 1) * radius^2, so h = 1 exactly on the
    sphere of radius radius*(1 + tolerance).
    """

    radius: float
    tolerance: float

    def __post_init__(self):
        if self.radius <= 0.0 or self.tolerance <= 0.0:
            raise ConfigError("projection bound needs radius > 0 and tolerance > 0")

    @property
    def band(self) -> float:
        return ((1.0 + self.tolerance) ** 2 - 1.0) * self.radius ** 2

    def value(self, theta) -> float:
        t = np.asarray(theta, dtype=float)
        return (t @ t - self.radius ** 2) / self.band

    def gradient(self, theta) -> np.ndarray:
        return 2.0 * np.asarray(theta, dtype=float) / self.band


def projection(theta, y, bound: NormBallBound) -> np.ndarray:
    """Project the update direction y at parameter theta.

    Returns y unless theta is outside the bound surface (h > 0) and y
    points further out; in that case the outward radial part is removed
    in proportion to h.
    """
    y = np.asarray(y, dtype=float)
    h = bound.value(theta)
    if h <= 0.0:
        return y.copy()
    grad = bound.gradient(theta)
    inner = y @ grad
    if inner <= 0.0:
        return y.copy()
    gg = grad @ grad
    if gg == 0.0:
        raise SolverError("projection gradient vanished in the active branch")
    return y - grad * (inner * h / gg)


def adaptive_update(theta_hat, x, e, p, b, gamma, bounds, omega_g: float = 0.0,
                    include_gyro: bool = True):
    """Columnwise projected update d(theta_hat)/dt.

    gamma holds per-entry adaptation rates (same shape as theta_hat);
    bounds is one NormBallBound per input column.  Returns the update
    and a list of column indices currently past the tolerance band,
    for anomaly logging by the caller.
    """
    theta_hat = np.asarray(theta_hat, dtype=float)
    phi = regressor(x, omega_g, include_gyro)
    epb = np.asarray(e, dtype=float) @ (np.asarray(p) @ np.asarray(b))
    raw = np.outer(phi, epb)
    out = np.empty_like(theta_hat)
    over = []
    for j, bound in enumerate(bounds):
        out[:, j] = gamma[:, j] * projection(theta_hat[:, j], raw[:, j], bound)
        if bound.value(theta_hat[:, j]) > 1.0:
            over.append(j)
    return out, over


def control_law(x, theta_hat, k, omega_g: float = 0.0,
                include_gyro: bool = True) -> np.ndarray:
    """u = -K^T x - theta_hat^T Phi(x)."""
    phi = regressor(x, omega_g, include_gyro)
    return -np.asarray(k).T @ np.asarray(x, dtype=float) - np.asarray(theta_hat).T @ phi


def reference_model_deriv(x_m, r, e, a_m, b_m, l_mat) -> np.ndarray:
    """x_m' = A_m x_m + B_m r - L e  (L = 0 for the open-loop model)."""
    return (np.asarray(a_m) @ np.asarray(x_m, dtype=float)
            + np.asarray(b_m) @ np.asarray(r, dtype=float)
            - np.asarray(l_mat) @ np.asarray(e, dtype=float))


def adaptation_rate_heuristic(theta_nominal, tau_m: float, r_max: float,
                              floor: float = 1e-3) -> np.ndarray:
    """Per-entry rates |theta_i| / (3 tau_m r_max^2), floored from below.

    tau_m is the smallest time constant of the reference model and
    r_max the largest commanded reference magnitude.
    """
    if tau_m <= 0.0:
        raise ConfigError(f"tau_m must be positive, got {tau_m!r}")
    if r_max == 0.0:
        raise ConfigError("reference bound r_max must be nonzero")
    gamma = np.abs(np.asarray(theta_nominal, dtype=float)) / (3.0 * tau_m * abs(r_max ** 2))
    return np.maximum(gamma, floor)


@dataclass(frozen=True)
class ControllerDesign:
    """Frozen controller synthesis for one plant.

    Holds the nominal and applied baseline gains, the reference model,
    the Lyapunov solution for the selected mode and the adaptation
    configuration.
    """

    mode: str                 # "mrac" | "crm"
    k_nominal: np.ndarray
    k_applied: np.ndarray
    a_m: np.ndarray
    ell: float
    l_mat: np.ndarray = field(repr=False, default=None)
    p: np.ndarray = field(repr=False, default=None)
    gamma: np.ndarray = field(repr=False, default=None)
    bounds: tuple = ()
    include_gyro: bool = True
    theta_nominal: np.ndarray = field(repr=False, default=None)

    @property
    def n(self) -> int:
        return self.a_m.shape[0]


def synthesize_controller(plant_a, plant_b, mode: str, state_weights,
                          control_weights, gain_degradation: float,
                          crm_ell_factor: float, q_scale: float,
                          theta_p_nominal, gamma_scale: float, r_max: float,
                          theta_max, projection_tolerance: float,
                          gamma_floor: float = 1e-3,
                          include_gyro: bool = True) -> ControllerDesign:
    """Full synthesis: LQR gain, reference model, Lyapunov solve, rates.

    The reference model uses the undegraded design gain; the applied
    baseline gain is scaled by gain_degradation.  For mode "crm" the
    error feedback is L = -ell I with ell chosen so the slowest
    reference-model mode speeds up by crm_ell_factor; for "mrac" L = 0.
    """
    if mode not in ("mrac", "crm"):
        raise ConfigError(f"controller mode must be 'mrac' or 'crm', got {mode!r}")
    a = np.asarray(plant_a, dtype=float)
    b = np.asarray(plant_b, dtype=float)
    n = a.shape[0]
    k_nom = design_baseline_gain(a, b, state_weights, control_weights)
    a_m = a - b @ k_nom.T
    eig_re = np.linalg.eigvals(a_m).real
    if mode == "crm":
        ell = (crm_ell_factor - 1.0) * float(np.abs(eig_re).min())
    else:
        ell = 0.0
    l_mat = -ell * np.eye(n)
    p = lyapunov_solve(a_m + l_mat, q_scale * np.eye(n))
    k_applied = gain_degradation * k_nom
    theta_p = np.asarray(theta_p_nominal, dtype=float)
    theta_nom = np.vstack([k_nom - k_applied, theta_p])
    tau_m = 1.0 / float(np.abs(eig_re).max())
    gamma = gamma_scale * adaptation_rate_heuristic(theta_nom, tau_m, r_max,
                                                    floor=gamma_floor)
    theta_max = np.broadcast_to(np.asarray(theta_max, dtype=float), (b.shape[1],))
    bounds = tuple(NormBallBound(radius=float(tm), tolerance=projection_tolerance)
                   for tm in theta_max)
    return ControllerDesign(mode=mode, k_nominal=k_nom, k_applied=k_applied,
                            a_m=a_m, ell=ell, l_mat=l_mat, p=p, gamma=gamma,
                            bounds=bounds, include_gyro=include_gyro,
                            theta_nominal=theta_nom)


def coupling_weights_nominal(params) -> np.ndarray:
    """Matched-uncertainty weights of the rate-product terms.

    These are the coefficients with which the inertia couplings and the
    gyroscopic terms of the attitude equations appear when written as a
    matched input disturbance.
    """
    theta_p = np.zeros((N_BILINEAR, 4))
    theta_p[2, 1] = (params.j_y - params.j_z) / params.arm_length
    theta_p[4, 1] = -params.j_rotor / params.arm_length
    theta_p[1, 2] = (params.j_z - params.j_x) / params.arm_length
    theta_p[3, 2] = params.j_rotor / params.arm_length
    theta_p[0, 3] = params.j_x - params.j_y
    return theta_p
