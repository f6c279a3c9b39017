"""Stationary states of the uncontrolled phase-field system.

A stationary order parameter solves the semilinear Neumann problem

    nu * phi'' - phi^3 + phi = C      on (0, L),   phi'(0) = phi'(L) = 0,

with C a free integration constant, while the stationary temperature is an
arbitrary constant theta_inf.  Solutions are critical points of the energy

    Upsilon(phi) = int ( nu/2 |phi'|^2 + (phi^2 - 1)^2 / 4 + C phi ) dx,

which we minimize by a semi-implicit gradient flow (linear part nu*Lap - I
implicit, cubic explicit) with an optional Newton polish.  Constant states
phi = root of phi^3 - phi + C are always available in closed form.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .spectral import (
    ScalarField,
    SpectralBasis,
    _values_on_grid,
    gradient_values,
    laplacian,
    pointwise_product,
    transform_forward,
    transform_inverse,
)

__all__ = [
    "StationaryState",
    "StationaryConvergenceError",
    "stationary_constant",
    "stationary_minimize",
    "upsilon",
    "stationary_residual",
    "chi_infinity",
    "gbar_infinity",
]


class StationaryConvergenceError(RuntimeError):
    """Gradient flow failed to reach the requested residual tolerance."""

    def __init__(self, message: str, last_residual: float, iterations: int):
        super().__init__(message)
        self.last_residual = last_residual
        self.iterations = iterations


@dataclass
class StationaryState:
    """A stationary pair (phi_inf, theta_inf) and its diagnostics."""

    phi_inf: ScalarField
    theta_inf: float
    C_lagrange: float
    residual: float
    upsilon: float = np.nan
    upsilon_history: list[float] = field(default_factory=list, repr=False)

    @property
    def basis(self) -> SpectralBasis:
        return self.phi_inf.basis


def stationary_residual(phi: ScalarField, nu: float, C: float) -> float:
    """L2 norm of nu*Lap(phi) - phi^3 + phi - C."""
    cubic = pointwise_product([phi, phi, phi])
    res = nu * laplacian(phi).coeffs - cubic.coeffs + phi.coeffs
    res[0] -= C * np.sqrt(phi.basis.L)
    return float(np.linalg.norm(res))


def upsilon(phi: ScalarField, nu: float, C: float) -> float:
    """Energy int( nu/2 |phi'|^2 + (phi^2-1)^2/4 + C*phi ) dx by exact quadrature.

    The integrand is evaluated on the padded grid, where midpoint quadrature
    integrates the quartic of a band-limited field exactly.
    """
    basis = phi.basis
    P = 4 * basis.M
    v = _values_on_grid(basis, phi.coeffs, P)
    g = gradient_values(phi, P)
    integrand = 0.5 * nu * g * g + 0.25 * (v * v - 1.0) ** 2 + C * v
    return float(integrand.sum() * basis.L / P)


def stationary_constant(
    which: int, theta: float = 0.0, basis: SpectralBasis | None = None
) -> StationaryState:
    """Constant stationary state phi_inf = which in {-1, 0, +1}, with C = 0."""
    if which not in (-1, 0, 1):
        raise ValueError(f"constant stationary states are -1, 0, +1; got {which}")
    if basis is None:
        basis = SpectralBasis()
    phi = ScalarField.constant(basis, float(which))
    state = StationaryState(
        phi_inf=phi,
        theta_inf=float(theta),
        C_lagrange=0.0,
        residual=0.0,
        upsilon=upsilon(phi, nu=1.0, C=0.0),
    )
    return state


def stationary_minimize(
    C: float,
    init: ScalarField,
    nu: float,
    tol: float = 1e-8,
    max_iters: int = 20000,
    theta: float = 0.0,
    dt0: float = 0.25,
    newton_polish: bool = True,
) -> StationaryState:
    """Drive the gradient flow phi_t = nu*Lap(phi) - phi^3 + phi - C to rest.

    The linear part (nu*Lap - I) is treated implicitly, the remaining
    2*phi - phi^3 - C explicitly.  Steps that increase Upsilon are rejected
    and the step size halved, so the accepted energy sequence is
    non-increasing.  A short Newton polish brings the residual to ~1e-12
    when it converges; the flow result is kept otherwise.

    Raises StationaryConvergenceError if the residual tolerance is not met.
    """
    basis = init.basis
    phi = np.array(init.coeffs, dtype=float)
    sqrtL = np.sqrt(basis.L)

    def residual_of(coeffs: np.ndarray) -> float:
        return stationary_residual(ScalarField(basis, coeffs), nu, C)

    def upsilon_of(coeffs: np.ndarray) -> float:
        return upsilon(ScalarField(basis, coeffs), nu, C)

    dt = dt0
    ups = upsilon_of(phi)
    history = [ups]
    res = residual_of(phi)
    it = 0
    while res > tol and it < max_iters:
        f = ScalarField(basis, phi)
        cubic = pointwise_product([f, f, f]).coeffs
        explicit = 2.0 * phi - cubic
        explicit[0] -= C * sqrtL
        cand = (phi + dt * explicit) / (1.0 + dt * (nu * basis.kappa + 1.0))
        ups_cand = upsilon_of(cand)
        if ups_cand <= ups + 1e-15 * max(1.0, abs(ups)):
            phi = cand
            ups = ups_cand
            history.append(ups)
            dt = min(dt * 1.1, 4.0 * dt0)
        else:
            dt *= 0.5
            if dt < 1e-12:
                break
        res = residual_of(phi)
        it += 1

    if res > tol:
        raise StationaryConvergenceError(
            f"gradient flow stalled at residual {res:.3e} after {it} iterations"
            f" (tolerance {tol:.1e})",
            last_residual=res,
            iterations=it,
        )

    if newton_polish:
        phi = _newton_polish(basis, phi, nu, C, target=1e-12, iters=3)
        res = residual_of(phi)

    field_phi = ScalarField(basis, phi)
    return StationaryState(
        phi_inf=field_phi,
        theta_inf=float(theta),
        C_lagrange=float(C),
        residual=res,
        upsilon=upsilon_of(phi),
        upsilon_history=history,
    )


def _newton_polish(
    basis: SpectralBasis, coeffs: np.ndarray, nu: float, C: float, target: float, iters: int
) -> np.ndarray:
    """Newton steps on nu*Lap(phi) - phi^3 + phi - C = 0 in modal coordinates.

    The Jacobian nu*Lap + I - 3*phi^2 mixes modes through the multiplication
    operator, assembled densely via the transform matrix (M is small).
    """
    M = basis.M
    eye = np.eye(M)
    to_values = np.column_stack([transform_inverse(basis, eye[:, j]) for j in range(M)])
    to_coeffs = np.column_stack([transform_forward(basis, eye[:, j]) for j in range(M)])
    sqrtL = np.sqrt(basis.L)

    best = coeffs.copy()

    def residual_vec(c: np.ndarray) -> np.ndarray:
        f = ScalarField(basis, c)
        r = nu * laplacian(f).coeffs - pointwise_product([f, f, f]).coeffs + c
        r[0] -= C * sqrtL
        return r

    best_norm = np.linalg.norm(residual_vec(best))
    current = coeffs.copy()
    for _ in range(iters):
        if best_norm <= target:
            break
        vals = transform_inverse(basis, current)
        mult = to_coeffs @ ((3.0 * vals**2)[:, None] * to_values)
        jac = np.diag(-nu * basis.kappa + 1.0) - mult
        try:
            step = np.linalg.solve(jac, residual_vec(current))
        except np.linalg.LinAlgError:
            break
        current = current - step
        norm = np.linalg.norm(residual_vec(current))
        if norm < best_norm:
            best, best_norm = current.copy(), norm
    return best


def chi_infinity(state: StationaryState) -> float:
    """Sup-norm curvature size ||grad phi_inf||_inf + ||Lap phi_inf||_inf."""
    phi = state.phi_inf
    grad = gradient_values(phi)
    lap = laplacian(phi).values
    return float(np.max(np.abs(grad)) + np.max(np.abs(lap)))


def gbar_infinity(state: StationaryState) -> float:
    """||phi||_inf ||grad phi||_inf + ||phi||_inf ||Lap phi||_inf + ||grad phi||_inf^2."""
    phi = state.phi_inf
    sup = float(np.max(np.abs(phi.values)))
    grad = float(np.max(np.abs(gradient_values(phi))))
    lap = float(np.max(np.abs(laplacian(phi).values)))
    return sup * grad + sup * lap + grad * grad
