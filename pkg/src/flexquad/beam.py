"""Modal analysis of the flexible arm.

Each arm is a damped Euler-Bernoulli cantilever clamped at the hub and
carrying a point mass at the free end.  The dimensionless frequency
parameters beta_bar solve

    1 + 1/(cos(b) cosh(b)) - mbar * b * (tan(b) - tanh(b)) = 0,

where mbar is the ratio of tip mass to arm mass.  Mode shapes are the
classical cos/cosh - sin/sinh combinations, normalized so that the
weighted inner product int rho_c A_c W_j^2 dx over the span equals one.
The first few modes are assembled into per-arm and full-vehicle
state-space blocks driven by the rotor thrusts at the arm tips.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, SolverError

# guard distance kept around the singularities of tan(b)
_TAN_GUARD = 1e-6
_RESIDUAL_TOL = 1e-10


@dataclass(frozen=True)
class BeamSpec:
    """Geometry and material of one arm.

    Units: length m, density kg/m^3, youngs_modulus Pa,
    cross_section_area m^2, area_moment m^4, damping N*s/m^2,
    tip_mass kg.
    """

    length: float
    density: float
    youngs_modulus: float
    cross_section_area: float
    area_moment: float
    damping: float
    tip_mass: float

    def __post_init__(self):
        for name in ("length", "density", "youngs_modulus",
                     "cross_section_area", "area_moment", "damping",
                     "tip_mass"):
            v = getattr(self, name)
            if not (v > 0.0) or not np.isfinite(v):
                raise DomainError(f"BeamSpec.{name} must be strictly positive, got {v!r}")

    @property
    def mass_per_length(self) -> float:
        return self.density * self.cross_section_area

    @property
    def arm_mass(self) -> float:
        return self.mass_per_length * self.length

    @property
    def mass_ratio(self) -> float:
        return self.tip_mass / self.arm_mass

    @property
    def sigma_prime(self) -> float:
        """Damping per unit modal mass, sigma_c / (rho_c A_c)."""
        return self.damping / self.mass_per_length


@dataclass(frozen=True)
class Mode:
    """One retained bending mode (index is 1-based)."""

    index: int
    beta_bar: float       # dimensionless frequency root
    beta: float           # beta_bar / length, 1/m
    omega_bar: float      # natural frequency, rad/s
    gamma_bar: float      # shape normalization, 1/sqrt(kg)
    beta_star: float      # (cos b + cosh b)/(sin b + sinh b)
    tip_value: float      # W(length), 1/sqrt(kg)


@dataclass(frozen=True)
class ModalBasis:
    beam: BeamSpec
    modes: tuple[Mode, ...]
    sigma_prime: float

    @property
    def omegas(self) -> np.ndarray:
        return np.array([m.omega_bar for m in self.modes])

    @property
    def tip_values(self) -> np.ndarray:
        return np.array([m.tip_value for m in self.modes])


def frequency_equation_residual(beta_bar: float, mass_ratio: float) -> float:
    """Residual of the frequency equation in its published form."""
    b = beta_bar
    return (1.0 + 1.0 / (np.cos(b) * np.cosh(b))
            - mass_ratio * b * (np.tan(b) - np.tanh(b)))


def _scaled_equation(b, mass_ratio):
    # same roots as the published form, but bounded: multiplied through
    # by cos(b) cosh(b) and divided by cosh(b)
    return (np.cos(b) + 1.0 / np.cosh(b)
            - mass_ratio * b * (np.sin(b) - np.cos(b) * np.tanh(b)))


def _scaled_equation_deriv(b, mass_ratio):
    sech = 1.0 / np.cosh(b)
    th = np.tanh(b)
    core = np.sin(b) - np.cos(b) * th
    dcore = np.cos(b) + np.sin(b) * th - np.cos(b) * sech * sech
    return -np.sin(b) - sech * th - mass_ratio * (core + b * dcore)


def solve_frequency_roots(mass_ratio: float, n_modes: int) -> np.ndarray:
    """First n_modes positive roots of the frequency equation, ascending.

    Roots are bracketed by a sign-change scan over the intervals between
    consecutive singularities of tan (with a small guard band), bisected
    to 1e-12 width and polished with three Newton steps.  Note that an
    interval may hold zero, one or two roots depending on the mass
    ratio, so every sign change is kept rather than assuming one root
    per interval.
    """
    if mass_ratio < 0.0 or not np.isfinite(mass_ratio):
        raise DomainError(f"mass ratio must be >= 0, got {mass_ratio!r}")
    if n_modes < 1:
        raise DomainError(f"n_modes must be >= 1, got {n_modes!r}")

    roots = []
    k = 0
    max_intervals = 4 * n_modes + 16
    while len(roots) < n_modes and k < max_intervals:
        lo = max(k - 0.5, 0.0) * np.pi + _TAN_GUARD
        hi = (k + 0.5) * np.pi - _TAN_GUARD
        k += 1
        if hi <= lo:
            continue
        grid = np.linspace(lo, hi, 512)
        vals = _scaled_equation(grid, mass_ratio)
        sign = np.sign(vals)
        for i in np.nonzero(sign[:-1] * sign[1:] < 0)[0]:
            a, b = grid[i], grid[i + 1]
            fa = _scaled_equation(a, mass_ratio)
            while b - a > 1e-12:
                mid = 0.5 * (a + b)
                fm = _scaled_equation(mid, mass_ratio)
                if fa * fm <= 0.0:
                    b = mid
                else:
                    a, fa = mid, fm
            r = 0.5 * (a + b)
            for _ in range(3):
                d = _scaled_equation_deriv(r, mass_ratio)
                if d != 0.0:
                    r -= _scaled_equation(r, mass_ratio) / d
            if abs(frequency_equation_residual(r, mass_ratio)) >= _RESIDUAL_TOL:
                raise SolverError(
                    f"root polish failed for mode {len(roots) + 1}: "
                    f"beta_bar={r!r} residual above {_RESIDUAL_TOL:g}")
            roots.append(r)
            if len(roots) >= n_modes:
                break
    if len(roots) < n_modes:
        raise SolverError(
            f"only found {len(roots)} roots for mode {len(roots) + 1} "
            f"after scanning {max_intervals} intervals (mass_ratio={mass_ratio!r})")
    out = np.array(roots[:n_modes])
    if not np.all(np.diff(out) > 0):
        raise SolverError("frequency roots are not strictly increasing")
    return out


def natural_frequency(beta_bar: float, beam: BeamSpec) -> float:
    """omega_bar = (beta_bar/L)^2 sqrt(E J / (rho A))."""
    if beta_bar < 0.0:
        raise DomainError(f"beta_bar must be >= 0, got {beta_bar!r}")
    beta = beta_bar / beam.length
    return beta ** 2 * np.sqrt(
        beam.youngs_modulus * beam.area_moment / beam.mass_per_length)


def beta_star(beta_bar: float) -> float:
    s = np.sin(beta_bar) + np.sinh(beta_bar)
    if s == 0.0:
        raise DomainError(f"sin + sinh vanishes at beta_bar={beta_bar!r}")
    return (np.cos(beta_bar) + np.cosh(beta_bar)) / s


def shape_integral(beta_bar: float, beam: BeamSpec) -> float:
    """Closed form of int_0^L [unnormalized shape]^2 dx.

    Antiderivative of the squared cos/cosh - sin/sinh combination,
    evaluated over the span; the normalization follows as
    gamma_bar = 1/sqrt(rho_c A_c * shape_integral).
    """
    b = beta_bar
    bs = beta_star(b)
    s, c = np.sin(b), np.cos(b)
    sh, ch = np.sinh(b), np.cosh(b)
    s2, c2 = np.sin(2 * b), np.cos(2 * b)
    sh2, ch2 = np.sinh(2 * b), np.cosh(2 * b)
    total = (-bs * bs * s2 + bs * bs * sh2 + 4.0 * bs * bs * c * sh
             - 4.0 * (bs * bs + 1.0) * s * ch
             + 2.0 * bs * c2 - 2.0 * bs * ch2 + 8.0 * bs * s * sh
             + 4.0 * b + s2 + sh2 - 4.0 * c * sh)
    beta = b / beam.length
    return total / (4.0 * beta)


def normalization_constant(beta_bar: float, beam: BeamSpec) -> float:
    """gamma_bar such that int rho A W^2 dx = 1 for the normalized shape."""
    gc = shape_integral(beta_bar, beam)
    if gc <= 0.0 or not np.isfinite(gc):
        raise SolverError(
            f"non-positive shape integral {gc!r} at beta_bar={beta_bar!r}; "
            "not a valid frequency root")
    return 1.0 / np.sqrt(beam.mass_per_length * gc)


def mode_shape_eval(mode: Mode, x, beam: BeamSpec):
    """Evaluate the normalized shape W_j at span position(s) x in [0, L]."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0.0) or np.any(x > beam.length):
        raise DomainError("span position outside [0, length]")
    bx = mode.beta * x
    w = mode.gamma_bar * ((np.cos(bx) - np.cosh(bx))
                          - mode.beta_star * (np.sin(bx) - np.sinh(bx)))
    return w if w.shape else float(w)


def solve_modal_basis(beam: BeamSpec, n_modes: int = 3) -> ModalBasis:
    """Solve roots, frequencies and normalized shapes for the first modes."""
    roots = solve_frequency_roots(beam.mass_ratio, n_modes)
    modes = []
    for j, b in enumerate(roots, start=1):
        gb = normalization_constant(b, beam)
        bs = beta_star(b)
        tip = gb * ((np.cos(b) - np.cosh(b)) - bs * (np.sin(b) - np.sinh(b)))
        modes.append(Mode(index=j, beta_bar=float(b), beta=float(b / beam.length),
                          omega_bar=float(natural_frequency(b, beam)),
                          gamma_bar=float(gb), beta_star=float(bs),
                          tip_value=float(tip)))
    return ModalBasis(beam=beam, modes=tuple(modes),
                      sigma_prime=beam.sigma_prime)


def composite_simpson(values: np.ndarray, step: float) -> float:
    """Composite Simpson rule on an odd-length uniformly sampled array."""
    n = values.shape[0]
    if n < 3 or n % 2 == 0:
        raise DomainError("Simpson rule needs an odd number of samples >= 3")
    return step / 3.0 * (values[0] + values[-1]
                         + 4.0 * values[1:-1:2].sum()
                         + 2.0 * values[2:-2:2].sum())


def orthogonality_gram(basis: ModalBasis, panels: int = 10_000) -> np.ndarray:
    """Gram matrix G_jl = int rho A W_j W_l dx by composite Simpson.

    Computed once per unordered pair, so the result is symmetric exactly.
    """
    beam = basis.beam
    x = np.linspace(0.0, beam.length, 2 * panels + 1)
    step = beam.length / (2 * panels)
    shapes = [mode_shape_eval(m, x, beam) for m in basis.modes]
    n = len(shapes)
    gram = np.empty((n, n))
    for j in range(n):
        for l in range(j, n):
            val = composite_simpson(
                beam.mass_per_length * shapes[j] * shapes[l], step)
            gram[j, l] = val
            gram[l, j] = val
    return gram


def assemble_arm_block(basis: ModalBasis) -> tuple[np.ndarray, np.ndarray]:
    """Per-arm state block (A'_e, B'_ze) for states (z1, z1', z2, z2', z3, z3').

    Each mode contributes a companion pair with stiffness omega^2 and the
    shared damping sigma_prime; thrust enters through the squared tip
    values of the shapes.
    """
    n = len(basis.modes)
    a = np.zeros((2 * n, 2 * n))
    b = np.zeros((2 * n, 1))
    for j, mode in enumerate(basis.modes):
        a[2 * j, 2 * j + 1] = 1.0
        a[2 * j + 1, 2 * j] = -mode.omega_bar ** 2
        a[2 * j + 1, 2 * j + 1] = -basis.sigma_prime
        b[2 * j + 1, 0] = mode.tip_value ** 2
    return a, b


def assemble_elastic_system(basis: ModalBasis, force_map: np.ndarray):
    """Full four-arm blocks (A_e, B_ze, B_e) with B_e = B_ze force_map^-1.

    force_map is the 4x4 matrix taking per-rotor forces to the mixed
    input vector.
    """
    a_arm, b_arm = assemble_arm_block(basis)
    n = a_arm.shape[0]
    a_e = np.kron(np.eye(4), a_arm)
    b_ze = np.kron(np.eye(4), b_arm)
    try:
        fm_inv = np.linalg.inv(np.asarray(force_map, dtype=float))
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"force map is singular: {exc}") from exc
    b_e = b_ze @ fm_inv
    return a_e, b_ze, b_e


def tip_displacement(z_arm: np.ndarray) -> float:
    """Tip deflection of one arm from its six elastic states.

    The displacement states already carry the tip shape values, so the
    deflection is the plain sum over modes.
    """
    z = np.asarray(z_arm, dtype=float)
    return float(z[0::2].sum())
