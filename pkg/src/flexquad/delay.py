"""Stability of the operator/reference-model loop as a delay system.

The reference model and the operator integrator combine into

    mu'(t) = A_n mu(t) + A_d mu(t - tau),

whose characteristic roots solve det(sI - A_n - A_d e^(-tau s)) = 0.
Rightmost roots are found by Chebyshev collocation of the delay
interval (turning the infinitesimal generator into a matrix eigenvalue
problem) followed by Newton refinement on the characteristic
determinant.  When the delay matrix is available in factored low-rank
form A_d = G E, the collocation is applied to the delayed channel
signal only, which shrinks the eigenproblem from d(N+1) to d + rN.
"""

from __future__ import annotations

import concurrent.futures
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .pilot import OperatorModel

DEFAULT_ORDER = 32
DEFAULT_REAL_CUT = -50.0
_REFINE_LIMIT = 24


@dataclass(frozen=True)
class DelaySystem:
    """Matrices of mu' = A_n mu + A_d mu(t - tau).

    delay_gain/delay_select optionally carry a factorization
    A_d = delay_gain @ delay_select used by the fast solver path.
    """

    a_n: np.ndarray
    a_d: np.ndarray
    tau: float
    delay_gain: np.ndarray = None
    delay_select: np.ndarray = None

    @property
    def dim(self) -> int:
        return self.a_n.shape[0]

    def has_factors(self) -> bool:
        return self.delay_gain is not None and self.delay_select is not None


@dataclass(frozen=True)
class RootResult:
    root: complex
    refined: bool
    residual: float


def build_closed_loop_dde(a_m, b_m, operator: OperatorModel, e_h=None) -> DelaySystem:
    """Combined reference-model/operator delay system.

    Block layout for mu = (x_m, eta):

        A_n = [[A_m, B_m C_h], [0, A_h]]
        A_d = [[-B_m D_h E_h, 0], [-B_h E_h, 0]]

    e_h overrides the operator's default state selector row.
    """
    a_m = np.asarray(a_m, dtype=float)
    b_m = np.asarray(b_m, dtype=float)
    n = a_m.shape[0]
    if a_m.shape != (n, n):
        raise ConfigError("reference-model matrix must be square")
    if b_m.shape[0] != n:
        raise ConfigError(
            f"B_m has {b_m.shape[0]} rows, reference model has {n} states")
    if e_h is None:
        e_h = operator.state_selector(n)
    e_h = np.atleast_2d(np.asarray(e_h, dtype=float))
    if e_h.shape[1] != n:
        raise ConfigError(
            f"state selector has {e_h.shape[1]} columns, expected {n}")
    c_full = operator.output_embedding(b_m.shape[1]) * 1.0
    c_full *= 0.0
    c_full[operator.channel, 0] = operator.c_h
    d_full = np.zeros((b_m.shape[1], 1))
    d_full[operator.channel, 0] = operator.d_h
    n_eta = 1
    dim = n + n_eta
    a_n = np.zeros((dim, dim))
    a_n[:n, :n] = a_m
    a_n[:n, n:] = b_m @ c_full
    a_n[n:, n:] = operator.a_h
    gain = np.zeros((dim, 1))
    gain[:n, :] = -b_m @ d_full
    gain[n:, :] = -operator.b_h
    a_d = np.zeros((dim, dim))
    a_d[:, :n] = gain @ e_h
    select = np.zeros((1, dim))
    select[0, :n] = e_h[0, :]
    return DelaySystem(a_n=a_n, a_d=a_d, tau=float(operator.delay),
                       delay_gain=gain, delay_select=select)


def chebyshev_differentiation(n: int) -> np.ndarray:
    """Differentiation matrix on the n+1 Chebyshev points cos(k pi / n)."""
    if n == 0:
        return np.zeros((1, 1))
    k = np.arange(n + 1)
    x = np.cos(np.pi * k / n)
    c = np.hstack([2.0, np.ones(n - 1), 2.0]) * (-1.0) ** k
    big_x = np.tile(x, (n + 1, 1)).T
    dx = big_x - big_x.T
    d = np.outer(c, 1.0 / c) / (dx + np.eye(n + 1))
    return d - np.diag(d.sum(axis=1))


def characteristic_matrix(system: DelaySystem, s: complex) -> np.ndarray:
    d = system.dim
    return (s * np.eye(d) - system.a_n
            - system.a_d * np.exp(-system.tau * s))


def characteristic_residual(system: DelaySystem, s: complex) -> float:
    """Smallest singular value of the characteristic matrix, normalized."""
    g = characteristic_matrix(system, s)
    scale = max(1.0, np.linalg.norm(system.a_n))
    return float(np.linalg.svd(g, compute_uv=False)[-1] / scale)


def _collocation_eigs_full(system: DelaySystem, order: int) -> np.ndarray:
    d = system.dim
    dmat = (2.0 / system.tau) * chebyshev_differentiation(order)
    m = np.kron(dmat, np.eye(d))
    m[:d, :] = 0.0
    m[:d, :d] = system.a_n
    m[:d, -d:] = system.a_d
    return np.linalg.eigvals(m)


def _collocation_eigs_reduced(system: DelaySystem, order: int) -> np.ndarray:
    # collocate only the history of the delayed channel w = E mu,
    # with the boundary condition w(0) = E mu eliminated
    d = system.dim
    gain = system.delay_gain
    select = system.delay_select
    r = gain.shape[1]
    dmat = (2.0 / system.tau) * chebyshev_differentiation(order)
    n_tot = d + r * order
    m = np.zeros((n_tot, n_tot))
    m[:d, :d] = system.a_n
    m[:d, d + (order - 1) * r:] = gain
    eye_r = np.eye(r)
    for i in range(1, order + 1):
        row = d + (i - 1) * r
        m[row:row + r, :d] = dmat[i, 0] * select
        for j in range(1, order + 1):
            m[row:row + r, d + (j - 1) * r:d + j * r] = dmat[i, j] * eye_r
    return np.linalg.eigvals(m)


def _newton_refine(system: DelaySystem, s0: complex, max_iter: int = 60):
    """Newton iteration on det(G(s)) via the trace identity.

    The step is -1 / tr(G^-1 G'), which is the Newton step for the
    determinant without forming it; a singular G means s is a root.
    """
    d = system.dim
    eye = np.eye(d)
    s = complex(s0)
    for _ in range(max_iter):
        decay = np.exp(-system.tau * s)
        g = s * eye - system.a_n - system.a_d * decay
        try:
            g_inv = np.linalg.inv(g)
        except np.linalg.LinAlgError:
            return s, True
        trace = np.trace(g_inv @ (eye + system.tau * system.a_d * decay))
        if trace == 0.0:
            return s, False
        step = -1.0 / trace
        s = s + step
        if abs(step) < 1e-13 * max(1.0, abs(s)):
            return s, True
    return s, False


def rightmost_root(system: DelaySystem, order: int = DEFAULT_ORDER,
                   real_cut: float = DEFAULT_REAL_CUT,
                   residual_tol: float = 1e-8) -> RootResult:
    """Characteristic root of maximal real part above the cut.

    Collocation eigenvalues seed Newton refinements; among refined roots
    passing the residual test the one with largest real part is
    returned.  If no candidate refines, the raw collocation estimate is
    returned flagged unrefined.
    """
    if system.tau < 0.0:
        raise ConfigError(f"delay must be >= 0, got {system.tau!r}")
    if system.tau == 0.0 or not np.any(system.a_d):
        w = np.linalg.eigvals(system.a_n + system.a_d)
        root = complex(w[np.argmax(w.real)])
        return RootResult(root=root, refined=True,
                          residual=characteristic_residual(system, root))
    if system.has_factors():
        eigs = _collocation_eigs_reduced(system, order)
    else:
        eigs = _collocation_eigs_full(system, order)
    eigs = eigs[eigs.real > real_cut]
    if eigs.size == 0:
        raise ConfigError(
            f"no collocation eigenvalues above the real-part cut {real_cut}")
    eigs = eigs[np.argsort(-eigs.real)]
    best = None
    tried = 0
    seen = []
    for s0 in eigs:
        if s0.imag < -1e-12:
            continue  # conjugate partner suffices
        if any(abs(s0 - s) < 1e-6 * max(1.0, abs(s)) for s in seen):
            continue
        seen.append(s0)
        tried += 1
        if tried > _REFINE_LIMIT:
            break
        s, converged = _newton_refine(system, s0)
        if not converged:
            continue
        if characteristic_residual(system, s) < residual_tol:
            if best is None or s.real > best.real:
                best = s
    if best is None:
        return RootResult(root=complex(eigs[0]), refined=False,
                          residual=characteristic_residual(system, complex(eigs[0])))
    return RootResult(root=complex(best), refined=True,
                      residual=characteristic_residual(system, complex(best)))


def _map_cell(args):
    a_m, b_m, kp, tp, tau, channel, state_index, order, real_cut = args
    from .pilot import realize_operator
    try:
        op = realize_operator(kp, tp, tau, channel=channel, state_index=state_index)
        system = build_closed_loop_dde(a_m, b_m, op)
        res = rightmost_root(system, order=order, real_cut=real_cut)
        return res.root.real, res.root.imag, res.refined
    except Exception:
        return np.nan, np.nan, False


@dataclass(frozen=True)
class StabilityMap:
    kp_values: np.ndarray
    tp_values: np.ndarray
    real_part: np.ndarray   # shape (len(kp), len(tp))
    imag_part: np.ndarray
    refined: np.ndarray     # bool, same shape

    def rows(self):
        """Flat (kp, tp, re, im, refined) rows in grid order."""
        for i, kp in enumerate(self.kp_values):
            for j, tp in enumerate(self.tp_values):
                yield (kp, tp, self.real_part[i, j], self.imag_part[i, j],
                       int(self.refined[i, j]))


def stability_map(a_m, b_m, tau: float, kp_values, tp_values,
                  channel: int = 2, state_index: int = 2,
                  order: int = DEFAULT_ORDER, real_cut: float = DEFAULT_REAL_CUT,
                  workers: int = 1) -> StabilityMap:
    """Rightmost-root real parts over an operator-parameter grid.

    Cells are independent; with workers > 1 they are evaluated in a
    process pool and merged back by grid index, so the result does not
    depend on scheduling.  Solver failures mark cells NaN and the sweep
    continues.
    """
    kp_values = np.asarray(kp_values, dtype=float)
    tp_values = np.asarray(tp_values, dtype=float)
    if np.any(kp_values <= 0.0) or np.any(tp_values <= 0.0):
        raise ConfigError("operator parameter ranges must be positive")
    jobs = [(a_m, b_m, kp, tp, tau, channel, state_index, order, real_cut)
            for kp in kp_values for tp in tp_values]
    if workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            flat = list(pool.map(_map_cell, jobs, chunksize=16))
    else:
        flat = [_map_cell(j) for j in jobs]
    shape = (kp_values.size, tp_values.size)
    re = np.array([f[0] for f in flat]).reshape(shape)
    im = np.array([f[1] for f in flat]).reshape(shape)
    ok = np.array([f[2] for f in flat], dtype=bool).reshape(shape)
    return StabilityMap(kp_values=kp_values, tp_values=tp_values,
                        real_part=re, imag_part=im, refined=ok)


def simulate_homogeneous(system: DelaySystem, dt: float, n_steps: int,
                         mu0=None) -> np.ndarray:
    """Norm history of the unforced delay system, fixed-step RK4.

    Delayed stage values come from a per-step stage buffer (delay
    rounded to the step grid), zero before the start.  Used as the
    time-domain growth/decay oracle for the root solver.
    """
    d = system.dim
    mu = np.ones(d) / np.sqrt(d) if mu0 is None else np.asarray(mu0, dtype=float).copy()
    m_del = int(round(system.tau / dt))
    stages = np.zeros((n_steps + 1, 4, d))
    norms = np.empty(n_steps + 1)
    norms[0] = np.linalg.norm(mu)
    a_n, a_d = system.a_n, system.a_d

    def rhs(state, delayed):
        return a_n @ state + a_d @ delayed

    zero = np.zeros(d)
    for i in range(n_steps):
        if m_del == 0:
            # delay collapses; stage argument equals the current stage state
            k1 = rhs(mu, mu)
            s2 = mu + 0.5 * dt * k1
            k2 = rhs(s2, s2)
            s3 = mu + 0.5 * dt * k2
            k3 = rhs(s3, s3)
            s4 = mu + dt * k3
            k4 = rhs(s4, s4)
            stages[i] = (mu, s2, s3, s4)
        else:
            past = stages[i - m_del] if i >= m_del else (zero, zero, zero, zero)
            k1 = rhs(mu, past[0])
            s2 = mu + 0.5 * dt * k1
            k2 = rhs(s2, past[1])
            s3 = mu + 0.5 * dt * k2
            k3 = rhs(s3, past[2])
            s4 = mu + dt * k3
            k4 = rhs(s4, past[3])
            stages[i] = (mu, s2, s3, s4)
        mu = mu + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        norms[i + 1] = np.linalg.norm(mu)
    return norms


def growth_sign(system: DelaySystem, horizon_delays: float = 40.0,
                dt: float = 1e-3) -> int:
    """Sign of the dominant exponential rate, from a time-domain run.

    Fits the slope of log ||mu|| over the second half of a horizon of
    horizon_delays * tau seconds; returns +1 (growth) or -1 (decay).
    """
    t_final = horizon_delays * max(system.tau, 10.0 * dt)
    n = int(round(t_final / dt))
    norms = simulate_homogeneous(system, dt, n)
    half = n // 2
    t = dt * np.arange(n + 1)[half:]
    y = np.log(np.maximum(norms[half:], 1e-300))
    slope = np.polyfit(t, y, 1)[0]
    return 1 if slope > 0.0 else -1
