"""Rigid-body kinematics, rotor mixing and equations of motion.

The rigid states are decoupled from the arm bending states; bending is
driven by the rotor thrusts and read out separately as tip deflections.
State ordering used throughout:

    x_p = (x, y, z, phi, theta, psi, xd, yd, zd, phid, thetad, psid)
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DomainError, SolverError

RIGID_DIM = 12
N_INPUTS = 4
N_OUTPUTS = 4   # tracked outputs (x, y, z, psi)
TRACKED_INDICES = (0, 1, 2, 5)


@dataclass(frozen=True)
class QuadrotorParams:
    mass: float
    j_x: float
    j_y: float
    j_z: float
    j_rotor: float
    arm_length: float
    thrust_factor: float
    drag_factor: float
    gravity: float = 9.81

    def __post_init__(self):
        for name in ("mass", "j_x", "j_y", "j_z", "j_rotor", "arm_length",
                     "thrust_factor", "drag_factor", "gravity"):
            v = getattr(self, name)
            if not (v > 0.0) or not np.isfinite(v):
                raise DomainError(f"QuadrotorParams.{name} must be positive, got {v!r}")

    @property
    def hover_input(self) -> np.ndarray:
        return np.array([self.mass * self.gravity, 0.0, 0.0, 0.0])


def rotation_body_to_inertial(angles) -> np.ndarray:
    """Rotation matrix taking body-frame vectors to the inertial frame."""
    phi, theta, psi = angles
    cph, sph = np.cos(phi), np.sin(phi)
    cth, sth = np.cos(theta), np.sin(theta)
    cps, sps = np.cos(psi), np.sin(psi)
    return np.array([
        [cps * cth, cps * sth * sph - sps * cph, cps * sth * cph + sps * sph],
        [sps * cth, sps * sth * sph + cps * cph, sps * sth * cph - cps * sph],
        [-sth, cth * sph, cth * cph],
    ])


def euler_rate_map(angles, inverse: bool = False) -> np.ndarray:
    """Map between Euler-angle rates and the angular velocity vector.

    Returns R with omega = R @ angle_rates; with inverse=True returns
    R^-1, rejecting the gimbal singularity at cos(theta) ~ 0.
    """
    phi, theta, psi = angles
    cth, sth = np.cos(theta), np.sin(theta)
    cps, sps = np.cos(psi), np.sin(psi)
    r = np.array([
        [-sth, 0.0, 1.0],
        [cth * sps, cps, 0.0],
        [cth * cps, -sps, 0.0],
    ])
    if not inverse:
        return r
    if abs(cth) < 1e-6:
        raise DomainError(f"gimbal singularity: |cos(theta)| = {abs(cth):.2e}")
    return np.linalg.inv(r)


@dataclass(frozen=True)
class MixerMatrices:
    """Rotor mixing: r_omega maps squared speeds to u, r_force maps forces."""

    r_omega: np.ndarray
    r_force: np.ndarray
    r_omega_inv: np.ndarray = field(repr=False, default=None)
    r_force_inv: np.ndarray = field(repr=False, default=None)

    @classmethod
    def from_params(cls, params: QuadrotorParams) -> "MixerMatrices":
        kt, kq = params.thrust_factor, params.drag_factor
        r_omega = np.array([
            [kt, kt, kt, kt],
            [0.0, -kt, 0.0, kt],
            [-kt, 0.0, kt, 0.0],
            [-kq, kq, -kq, kq],
        ])
        r_force = r_omega / kt
        return cls(r_omega=r_omega, r_force=r_force,
                   r_omega_inv=np.linalg.inv(r_omega),
                   r_force_inv=np.linalg.inv(r_force))


def mix_rotor_speeds(speeds, mixer: MixerMatrices):
    """(u, omega_g) from the four rotor speeds."""
    w = np.asarray(speeds, dtype=float)
    if np.any(w < 0.0):
        raise DomainError(f"rotor speeds must be non-negative, got {w!r}")
    u = mixer.r_omega @ (w * w)
    omega_g = w[0] - w[1] + w[2] - w[3]
    return u, omega_g


def forces_from_input(u, mixer: MixerMatrices) -> np.ndarray:
    return mixer.r_force_inv @ np.asarray(u, dtype=float)


def rotor_speeds_from_input(u, params: QuadrotorParams, mixer: MixerMatrices):
    """Solve rotor speeds for a commanded u.

    Negative force solutions are clipped at zero (counted as saturation
    events) and the realized u is recomputed from the clipped forces, so
    the returned command is always physically producible.
    """
    forces = forces_from_input(u, mixer)
    n_clipped = int(np.count_nonzero(forces < 0.0))
    clipped = np.maximum(forces, 0.0)
    speeds = np.sqrt(clipped / params.thrust_factor)
    u_realized = mixer.r_force @ clipped
    return speeds, u_realized, n_clipped


def gyroscopic_velocity(speeds) -> float:
    w = np.asarray(speeds, dtype=float)
    return float(w[0] - w[1] + w[2] - w[3])


def rigid_derivatives(state, u, omega_g, params: QuadrotorParams) -> np.ndarray:
    """Time derivative of the 12 rigid states under mixed input u."""
    s = np.asarray(state, dtype=float)
    phi, theta, psi = s[3], s[4], s[5]
    phid, thetad, psid = s[9], s[10], s[11]
    cph, sph = np.cos(phi), np.sin(phi)
    cth, sth = np.cos(theta), np.sin(theta)
    cps, sps = np.cos(psi), np.sin(psi)
    m, g = params.mass, params.gravity
    out = np.empty(RIGID_DIM)
    out[0:6] = s[6:12]
    out[6] = (cps * sth * cph + sps * sph) * u[0] / m
    out[7] = (sps * sth * cph - cps * sph) * u[0] / m
    out[8] = -g + cth * cph * u[0] / m
    out[9] = (thetad * psid * (params.j_y - params.j_z) / params.j_x
              - params.j_rotor / params.j_x * thetad * omega_g
              + params.arm_length / params.j_x * u[1])
    out[10] = (phid * psid * (params.j_z - params.j_x) / params.j_y
               + params.j_rotor / params.j_y * phid * omega_g
               + params.arm_length / params.j_y * u[2])
    out[11] = (phid * thetad * (params.j_x - params.j_y) / params.j_z
               + u[3] / params.j_z)
    return out


@dataclass(frozen=True)
class ElasticSystem:
    """Assembled arm-bending state space (24 states, 4 arms x 3 modes)."""

    a_e: np.ndarray
    b_ze: np.ndarray
    b_e: np.ndarray

    def derivatives(self, z_e, u, effectiveness) -> np.ndarray:
        lam = np.asarray(effectiveness, dtype=float)
        if np.any(lam <= 0.0) or np.any(lam > 1.0):
            raise ConfigError(
                f"effectiveness entries must lie in (0, 1], got {lam!r}")
        return self.a_e @ np.asarray(z_e, dtype=float) + self.b_e @ (lam * np.asarray(u, dtype=float))


@dataclass(frozen=True)
class LinearPlant:
    """Hover linearization with the tracking-integral augmentation."""

    a_p: np.ndarray
    b_p: np.ndarray
    c_p: np.ndarray
    a: np.ndarray
    b: np.ndarray
    b_m: np.ndarray

    @property
    def n_states(self) -> int:
        return self.a.shape[0]


def controllability_rank(a: np.ndarray, b: np.ndarray) -> int:
    n = a.shape[0]
    blocks = [b]
    for _ in range(n - 1):
        blocks.append(a @ blocks[-1])
    return int(np.linalg.matrix_rank(np.hstack(blocks)))


def linearize_hover(params: QuadrotorParams) -> LinearPlant:
    """Small-angle linearization of the rigid dynamics about hover.

    The trim input is u = (m g, 0, 0, 0); the linear model is written in
    deviations from the trim.  Outputs are the tracked (x, y, z, psi).
    """
    g = params.gravity
    a_p = np.zeros((RIGID_DIM, RIGID_DIM))
    a_p[0:6, 6:12] = np.eye(6)
    a_p[6, 4] = g
    a_p[7, 3] = -g
    b_p = np.zeros((RIGID_DIM, N_INPUTS))
    b_p[8, 0] = 1.0 / params.mass
    b_p[9, 1] = params.arm_length / params.j_x
    b_p[10, 2] = params.arm_length / params.j_y
    b_p[11, 3] = 1.0 / params.j_z
    c_p = np.zeros((N_OUTPUTS, RIGID_DIM))
    for row, idx in enumerate(TRACKED_INDICES):
        c_p[row, idx] = 1.0
    if controllability_rank(a_p, b_p) < RIGID_DIM:
        raise SolverError("hover linearization is not controllable")
    a, b, b_m = augment_with_tracking_integral(a_p, b_p, c_p)
    return LinearPlant(a_p=a_p, b_p=b_p, c_p=c_p, a=a, b=b, b_m=b_m)


def augment_with_tracking_integral(a_p, b_p, c_p):
    """Append integral-of-tracking-error states to the plant.

    Returns (A, B, B_m) with state (x_p, e_p), e_p' = C_p x_p - r.
    """
    n_p = a_p.shape[0]
    n_r, n_pc = c_p.shape
    if n_pc != n_p:
        raise ConfigError(
            f"output matrix has {n_pc} state columns, plant has {n_p}")
    n_m = b_p.shape[1]
    a = np.zeros((n_p + n_r, n_p + n_r))
    a[:n_p, :n_p] = a_p
    a[n_p:, :n_p] = c_p
    b = np.vstack([b_p, np.zeros((n_r, n_m))])
    b_m = np.vstack([np.zeros((n_p, n_r)), -np.eye(n_r)])
    return a, b, b_m
