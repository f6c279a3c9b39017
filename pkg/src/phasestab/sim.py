"""Closed-loop time integration of the nonlinear transformed system.

The state is the deviation pair (y, z) from the stationary target, evolving as

    d/dt (y, z) + Op (y, z) = (G(y), 0) - B B^T R (y, z),

where the remainder collects everything beyond the constant-coefficient
linearization:

    G(y) = Lap( F_r(y) + g(x) y ),      F_r(y) = y^3 + 3 phi_inf y^2.

Expanding the Laplacian by the product rule gives the equivalent seven-term
form (3y^2 Lap y, 6y|grad y|^2, 12 y grad y . grad phi_inf, 3y^2 Lap phi_inf,
6 phi_inf y Lap y, 6 phi_inf |grad y|^2, Lap(g y)); both routes are
implemented and cross-checked.  Time stepping is IMEX Euler: the stiff
operator is inverted exactly per 2x2 modal block, remainder and feedback are
explicit.  A Crank-Nicolson/AB2 variant is available behind the ``scheme``
flag.

Trajectories record the decay norm ||y||_{D(A^1/2)} + ||z||_{D(A^1/4)} (the
norm in which exponential decay is certified), the plain product-space norm,
the equivalent physical-variable norm, the conserved means, and the feedback
amplitudes; the decay rate is a least-squares fit of the log norm over a
configurable window.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .actuator import Actuator
from .linearization import LinearizedPlant, PhysicalParams
from .lqr import RiccatiSolution
from .spectral import (
    ScalarField,
    _coeffs_from_grid,
    _values_on_grid,
    gradient_values,
    norm_D_alpha,
    transform_forward,
)
from .stationary import StationaryState

__all__ = [
    "StateYZ",
    "TrajectoryRecord",
    "BlowUpError",
    "remainder_G_direct",
    "remainder_G_expanded",
    "step_imex",
    "simulate",
    "xi_norm",
    "h_norm",
    "to_physical",
    "from_physical",
    "physical_deviation_norm",
    "fit_exponential_rate",
    "seeded_initial_state",
]

NORM_FLOOR = 1e-14


@dataclass
class StateYZ:
    """Deviation state: y = phi - phi_inf, z = sigma - sigma_inf, at time t."""

    y: ScalarField
    z: ScalarField
    t: float = 0.0


class BlowUpError(RuntimeError):
    """Trajectory norm exceeded the blow-up guard."""

    def __init__(self, message: str, t: float, norm: float):
        super().__init__(message)
        self.t = t
        self.norm = norm


def xi_norm(state: StateYZ) -> float:
    """Decay norm ||y||_{D(A^{1/2})} + ||z||_{D(A^{1/4})}."""
    return norm_D_alpha(state.y, 0.5) + norm_D_alpha(state.z, 0.25)


def h_norm(state: StateYZ) -> float:
    """Product-space norm (||y||^2 + ||z||^2)^{1/2}."""
    return float(np.hypot(state.y.norm_L2(), state.z.norm_L2()))


# -- nonlinear remainder ----------------------------------------------------


def remainder_G_direct(
    y: ScalarField, phi_inf: ScalarField, g: ScalarField
) -> ScalarField:
    """G(y) = Lap( y^3 + 3 phi_inf y^2 + g y ), products dealiased."""
    basis = y.basis
    if phi_inf.basis.M != basis.M or g.basis.M != basis.M:
        raise ValueError("fields live on different bases")
    P = 2 * basis.M
    yv = _values_on_grid(basis, y.coeffs, P)
    pv = _values_on_grid(basis, phi_inf.coeffs, P)
    gv = _values_on_grid(basis, g.coeffs, P)
    inner = yv**3 + 3.0 * pv * yv**2 + gv * yv
    coeffs = _coeffs_from_grid(basis, inner)
    return ScalarField(basis, -basis.kappa * coeffs)


def remainder_G_expanded(
    y: ScalarField, phi_inf: ScalarField, g: ScalarField
) -> ScalarField:
    """Sum of the seven product-rule terms of G(y), each pseudospectral."""
    basis = y.basis
    if phi_inf.basis.M != basis.M or g.basis.M != basis.M:
        raise ValueError("fields live on different bases")
    P = 2 * basis.M

    yv = _values_on_grid(basis, y.coeffs, P)
    dyv = gradient_values(y, P)
    lapyv = _values_on_grid(basis, -basis.kappa * y.coeffs, P)

    pv = _values_on_grid(basis, phi_inf.coeffs, P)
    dpv = gradient_values(phi_inf, P)
    lappv = _values_on_grid(basis, -basis.kappa * phi_inf.coeffs, P)

    gv = _values_on_grid(basis, g.coeffs, P)
    dgv = gradient_values(g, P)
    lapgv = _values_on_grid(basis, -basis.kappa * g.coeffs, P)

    total = (
        3.0 * yv**2 * lapyv
        + 6.0 * yv * dyv**2
        + 12.0 * yv * dyv * dpv
        + 3.0 * yv**2 * lappv
        + 6.0 * pv * yv * lapyv
        + 6.0 * pv * dyv**2
        + (gv * lapyv + yv * lapgv + 2.0 * dyv * dgv)
    )
    return ScalarField(basis, _coeffs_from_grid(basis, total))


# -- physical variables ------------------------------------------------------


def _sigma_inf(state: StationaryState, params: PhysicalParams) -> ScalarField:
    """sigma_inf = alpha0 (theta_inf + l0 phi_inf) as a field."""
    basis = state.basis
    const = ScalarField.constant(basis, params.alpha0 * state.theta_inf)
    return const + (params.alpha0 * params.l0) * state.phi_inf


def to_physical(
    state: StateYZ, stat: StationaryState, params: PhysicalParams
) -> tuple[ScalarField, ScalarField]:
    """Map (y, z) back to (phi, theta): phi = y + phi_inf, theta = sigma/alpha0 - l0 phi."""
    phi = state.y + stat.phi_inf
    sigma = state.z + _sigma_inf(stat, params)
    theta = (1.0 / params.alpha0) * sigma - params.l0 * phi
    return phi, theta


def from_physical(
    phi: ScalarField,
    theta: ScalarField,
    stat: StationaryState,
    params: PhysicalParams,
    t: float = 0.0,
) -> StateYZ:
    """Inverse map: y = phi - phi_inf, z = alpha0 (theta + l0 phi) - sigma_inf."""
    y = phi - stat.phi_inf
    sigma = params.alpha0 * (theta + params.l0 * phi)
    z = sigma - _sigma_inf(stat, params)
    return StateYZ(y=y, z=z, t=t)


def physical_deviation_norm(
    state: StateYZ, stat: StationaryState, params: PhysicalParams
) -> float:
    """Composite physical-variable norm

    ||phi - phi_inf||_{D(A^{1/2})}
        + ||alpha0 (theta - theta_inf) + alpha0 l0 (phi - phi_inf)||_{D(A^{1/4})},

    recomputed through (phi, theta); identically equal to the (y, z) decay
    norm since the second argument is exactly z.
    """
    phi, theta = to_physical(state, stat, params)
    dphi = phi - stat.phi_inf
    theta_inf = ScalarField.constant(phi.basis, stat.theta_inf)
    combo = params.alpha0 * (theta - theta_inf) + (params.alpha0 * params.l0) * dphi
    return norm_D_alpha(dphi, 0.5) + norm_D_alpha(combo, 0.25)


# -- time stepping -----------------------------------------------------------


class _Stepper:
    """Precomputed IMEX machinery for a fixed (plant, gain, actuator, dt)."""

    def __init__(
        self,
        plant: LinearizedPlant,
        dt: float,
        sol: RiccatiSolution | None,
        act: Actuator | None,
        nonlinear: bool,
        scheme: str = "imex1",
    ):
        if dt <= 0:
            raise ValueError(f"time step must be positive, got {dt}")
        if scheme not in ("imex1", "imex2"):
            raise ValueError(f"unknown scheme {scheme!r}; use 'imex1' or 'imex2'")
        if (sol is None) != (act is None):
            raise ValueError("feedback needs both the Riccati solution and the actuator")
        self.plant = plant
        self.basis = plant.basis
        self.dt = dt
        self.sol = sol
        self.act = act
        self.nonlinear = nonlinear
        self.scheme = scheme

        blocks = plant.A_blocks
        self.dt_bound = self._dt_bound(blocks)
        theta = 0.5 * dt if scheme == "imex2" else dt
        a = 1.0 + theta * blocks[:, 0, 0]
        b = theta * blocks[:, 0, 1]
        c = theta * blocks[:, 1, 0]
        d = 1.0 + theta * blocks[:, 1, 1]
        det = a * d - b * c
        if np.min(det) <= 0.0 or np.min(np.abs(det)) < 1e-12:
            raise ValueError(
                f"implicit blocks lose invertibility (min det {np.min(det):.3e}); "
                f"keep dt below {self.dt_bound:.3e}"
            )
        self.inv = (d / det, -b / det, -c / det, a / det)

        M = self.basis.M
        self.P = 2 * M
        self.phi_inf_padded = _values_on_grid(self.basis, plant.phi_inf.coeffs, self.P)
        self.g_padded = _values_on_grid(self.basis, plant.g.coeffs, self.P)
        self._prev_explicit: np.ndarray | None = None

    @staticmethod
    def _dt_bound(blocks: np.ndarray) -> float:
        """Largest dt keeping every det(I + dt A_k) positive."""
        bound = np.inf
        for k in range(blocks.shape[0]):
            a, b = blocks[k, 0, 0], blocks[k, 0, 1]
            c = blocks[k, 1, 1]
            # det(I + dt A) = 1 + dt (a + c) + dt^2 (a c - b^2)
            q2, q1 = a * c - b * b, a + c
            if q2 >= 0:
                continue
            roots = np.roots([q2, q1, 1.0])
            positive = roots[(roots.imag == 0) & (roots.real > 0)].real
            if positive.size:
                bound = min(bound, float(positive.min()))
        return bound

    def remainder_coeffs(self, y_coeffs: np.ndarray) -> np.ndarray:
        """Modal coefficients of G(y) via the direct (collected) form."""
        basis = self.basis
        yv = _values_on_grid(basis, y_coeffs, self.P)
        inner = yv**3 + 3.0 * self.phi_inf_padded * yv**2 + self.g_padded * yv
        return -basis.kappa * _coeffs_from_grid(basis, inner)

    def explicit_coeffs(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Explicit right-hand side (remainder plus feedback) and amplitudes."""
        M = self.basis.M
        rhs = np.zeros(2 * M)
        w = np.zeros(0)
        if self.nonlinear:
            rhs[:M] += self.remainder_coeffs(x[:M])
        if self.sol is not None:
            w = -(self.sol.K_gain @ x)
            wv = self.act.weight.values
            fy = wv * (self.act.phi_values @ w)
            fz = wv * (self.act.psi_values @ w)
            rhs[:M] += transform_forward(self.basis, fy)
            rhs[M:] += transform_forward(self.basis, fz)
        return rhs, w

    def _implicit_solve(self, rhs: np.ndarray) -> np.ndarray:
        M = self.basis.M
        i00, i01, i10, i11 = self.inv
        ry, rz = rhs[:M], rhs[M:]
        return np.concatenate([i00 * ry + i01 * rz, i10 * ry + i11 * rz])

    def step(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Advance the stacked modal state by one dt; returns (x_next, w)."""
        dt = self.dt
        explicit, w = self.explicit_coeffs(x)
        if self.scheme == "imex1":
            return self._implicit_solve(x + dt * explicit), w
        # Crank-Nicolson on the operator, AB2 on the explicit part
        M = self.basis.M
        blocks = self.plant.A_blocks
        y, z = x[:M], x[M:]
        Ax = np.concatenate(
            [
                blocks[:, 0, 0] * y + blocks[:, 0, 1] * z,
                blocks[:, 1, 0] * y + blocks[:, 1, 1] * z,
            ]
        )
        prev = self._prev_explicit if self._prev_explicit is not None else explicit
        rhs = x - 0.5 * dt * Ax + dt * (1.5 * explicit - 0.5 * prev)
        self._prev_explicit = explicit
        return self._implicit_solve(rhs), w


def step_imex(
    state: StateYZ,
    dt: float,
    plant: LinearizedPlant,
    sol: RiccatiSolution | None = None,
    act: Actuator | None = None,
    nonlinear: bool = True,
    scheme: str = "imex1",
) -> StateYZ:
    """One IMEX step of the closed- or open-loop system (convenience wrapper)."""
    stepper = _Stepper(plant, dt, sol, act, nonlinear, scheme)
    x = np.concatenate([state.y.coeffs, state.z.coeffs])
    x_next, _ = stepper.step(x)
    M = plant.basis.M
    return StateYZ(
        y=ScalarField(plant.basis, x_next[:M]),
        z=ScalarField(plant.basis, x_next[M:]),
        t=state.t + dt,
    )


# -- trajectories ------------------------------------------------------------


@dataclass
class TrajectoryRecord:
    times: np.ndarray
    xi_norms: np.ndarray
    h_norms: np.ndarray
    physical_norms: np.ndarray
    mean_y: np.ndarray
    mean_z: np.ndarray
    control_amplitudes: np.ndarray  # (n_rec, N), empty second axis when open loop
    fitted_rate: float | None
    fit_window: tuple[float, float]
    fit_r2: float | None
    final_state: StateYZ = field(repr=False, default=None)


def fit_exponential_rate(
    times: np.ndarray,
    values: np.ndarray,
    window: tuple[float, float],
    min_samples: int = 20,
    r2_threshold: float = 0.99,
    floor: float = NORM_FLOOR,
) -> tuple[float | None, float | None]:
    """OLS fit of log(values) ~ a - rate * t on the window.

    Returns (rate, r2); rate is None when the window has too few samples,
    any sample sits at the machine-noise floor, or the fit quality is below
    the R^2 threshold.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    mask = (times >= window[0]) & (times <= window[1])
    t, v = times[mask], values[mask]
    if len(t) < min_samples or np.any(v < floor):
        return None, None
    logv = np.log(v)
    design = np.column_stack([np.ones_like(t), t])
    coef, *_ = np.linalg.lstsq(design, logv, rcond=None)
    pred = design @ coef
    ss_res = float(np.sum((logv - pred) ** 2))
    ss_tot = float(np.sum((logv - logv.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    rate = -float(coef[1])
    if r2 < r2_threshold:
        return None, r2
    return rate, r2


def simulate(
    plant: LinearizedPlant,
    y0: ScalarField,
    z0: ScalarField,
    dt: float,
    t_end: float,
    sol: RiccatiSolution | None = None,
    act: Actuator | None = None,
    nonlinear: bool = True,
    scheme: str = "imex1",
    stat: StationaryState | None = None,
    record_every: int = 1,
    fit_window: tuple[float, float] | None = None,
    blowup_factor: float = 1e6,
) -> TrajectoryRecord:
    """Integrate to t_end, recording norms, means and feedback amplitudes.

    The decay rate is fitted on log(xi norm) over ``fit_window`` (default
    the second half of the run).  Raises BlowUpError when the decay norm
    exceeds ``blowup_factor`` times its initial value.
    """
    stepper = _Stepper(plant, dt, sol, act, nonlinear, scheme)
    basis = plant.basis
    M = basis.M
    params = plant.params
    if fit_window is None:
        fit_window = (0.5 * t_end, t_end)

    x = np.concatenate([y0.coeffs, z0.coeffs])
    n_steps = int(round(t_end / dt))
    n_amp = act.N if (act is not None and sol is not None) else 0

    times, xi_s, h_s, phys_s, my_s, mz_s, amps = [], [], [], [], [], [], []
    sqrtL = np.sqrt(basis.L)
    wy = basis.mu**0.5
    wz = basis.mu**0.25

    def record(t: float, x: np.ndarray, w: np.ndarray):
        y_c, z_c = x[:M], x[M:]
        times.append(t)
        xi_s.append(np.linalg.norm(wy * y_c) + np.linalg.norm(wz * z_c))
        h_s.append(np.hypot(np.linalg.norm(y_c), np.linalg.norm(z_c)))
        if stat is not None:
            state = StateYZ(ScalarField(basis, y_c), ScalarField(basis, z_c), t)
            phys_s.append(physical_deviation_norm(state, stat, params))
        else:
            phys_s.append(xi_s[-1])
        my_s.append(y_c[0] / sqrtL)
        mz_s.append(z_c[0] / sqrtL)
        amps.append(w if len(w) else np.zeros(n_amp))

    xi0 = np.linalg.norm(wy * x[:M]) + np.linalg.norm(wz * x[M:])
    record(0.0, x, np.zeros(n_amp))
    for step_idx in range(1, n_steps + 1):
        x, w = stepper.step(x)
        t = step_idx * dt
        if step_idx % record_every == 0 or step_idx == n_steps:
            record(t, x, w)
            if xi_s[-1] > blowup_factor * max(xi0, NORM_FLOOR):
                raise BlowUpError(
                    f"decay norm {xi_s[-1]:.3e} at t={t:.3f} exceeds "
                    f"{blowup_factor:.0e} x initial {xi0:.3e}",
                    t=t,
                    norm=xi_s[-1],
                )

    times_arr = np.array(times)
    xi_arr = np.array(xi_s)
    rate, r2 = fit_exponential_rate(times_arr, xi_arr, fit_window)

    final = StateYZ(
        y=ScalarField(basis, x[:M].copy()),
        z=ScalarField(basis, x[M:].copy()),
        t=n_steps * dt,
    )
    return TrajectoryRecord(
        times=times_arr,
        xi_norms=xi_arr,
        h_norms=np.array(h_s),
        physical_norms=np.array(phys_s),
        mean_y=np.array(my_s),
        mean_z=np.array(mz_s),
        control_amplitudes=np.array(amps) if amps else np.zeros((0, n_amp)),
        fitted_rate=rate,
        fit_window=fit_window,
        fit_r2=r2,
        final_state=final,
    )


def seeded_initial_state(
    basis, rho: float, seed: int, mu_decay: float = 2.0
) -> tuple[ScalarField, ScalarField]:
    """Random smooth initial data with decay norm exactly rho.

    Gaussian modal coefficients damped by mu_k^{-mu_decay} (smooth enough for
    the decay norm), rescaled so ||y||_{D(A^{1/2})} + ||z||_{D(A^{1/4})} = rho.
    """
    rng = np.random.default_rng(seed)
    cy = rng.standard_normal(basis.M) * basis.mu ** (-mu_decay)
    cz = rng.standard_normal(basis.M) * basis.mu ** (-mu_decay)
    y = ScalarField(basis, cy)
    z = ScalarField(basis, cz)
    total = norm_D_alpha(y, 0.5) + norm_D_alpha(z, 0.25)
    scale = rho / total
    return scale * y, scale * z
