"""Localized actuation through the unstable modes.

The control enters both equations through a fixed smooth bump w = 1*_omega
supported in an interval omega = (a, b):

    w(x) = exp(-1 / (1 - s^2)),   s = (2x - a - b) / (b - a)   on (a, b),

and zero elsewhere (so w(midpoint) = 1/e and w > 0 on the middle half
omega_0).  Given the N unstable eigenpairs (phi_i, psi_i) of the plant, the
input map and its adjoint are

    B W    = ( sum_i w phi_i W_i ,  sum_i w psi_i W_i ),
    (B* q)_i = int w (phi_i q_1 + psi_i q_2) dx,

and the modal coupling matrix is the weighted Gram matrix

    d_ij = int w (phi_i phi_j + psi_i psi_j) dx,

which is exactly the input matrix of the unstable modal ODEs
xi_i' + lambda_i xi_i = sum_j d_ij W_j.  Its smallest eigenvalue certifies
controllability; the minimum-energy open-loop control that nulls xi(T0) is
built from the finite-horizon Gramian of that small ODE system.

All quadratures and products live on the M collocation nodes with the exact
node values of w.  That one choice makes B and B* exact discrete adjoints,
makes D exactly symmetric, and keeps the applied forcing identically zero
at every node outside omega.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linearization import LinearizedPlant
from .spectral import ScalarField, SpectralBasis, transform_inverse

__all__ = [
    "Actuator",
    "KalmanCertificate",
    "NullControlPlan",
    "GramianConditionError",
    "bump_weight",
    "build_actuator",
    "apply_B",
    "apply_B_star",
    "kalman_certificate",
    "null_control",
    "open_loop_extend",
    "rk4_propagate",
]

GRAMIAN_CONDITION_LIMIT = 1e12


class GramianConditionError(RuntimeError):
    """Steering Gramian too ill-conditioned to invert reliably."""


def bump_weight(omega: tuple[float, float], basis: SpectralBasis) -> ScalarField:
    """Smooth bump supported in omega, evaluated exactly at the nodes."""
    a, b = omega
    if not (0.0 < a < b < basis.L):
        raise ValueError(f"control interval {omega} must satisfy 0 < a < b < L={basis.L}")
    x = basis.nodes
    values = np.zeros_like(x)
    s = (2.0 * x - a - b) / (b - a)
    inside = np.abs(s) < 1.0
    values[inside] = np.exp(-1.0 / (1.0 - s[inside] ** 2))
    return ScalarField.from_values(basis, values)


@dataclass
class Actuator:
    """Bump weight, unstable eigenpairs and the realized B / B* / D matrices."""

    omega: tuple[float, float]
    omega0: tuple[float, float]
    weight: ScalarField
    lambdas: np.ndarray  # (N,) unstable eigenvalues, ascending
    modes: np.ndarray  # (2M, N) unstable eigenvectors, modal coordinates
    phi_values: np.ndarray  # (M, N) y components at the nodes
    psi_values: np.ndarray  # (M, N) z components at the nodes
    D_matrix: np.ndarray  # (N, N)
    B_matrix: np.ndarray  # (2M, N)
    basis: SpectralBasis

    @property
    def N(self) -> int:
        return len(self.lambdas)


def build_actuator(
    plant: LinearizedPlant, omega: tuple[float, float] = (0.25, 0.75)
) -> Actuator:
    """Assemble the actuator for the plant's unstable subspace."""
    basis = plant.basis
    M = basis.M
    weight = bump_weight(omega, basis)
    w = weight.values

    N = plant.N_unstable
    modes = plant.eigenvectors[:, :N].copy()
    lambdas = plant.eigenvalues[:N].copy()

    phi_values = np.column_stack(
        [transform_inverse(basis, modes[:M, j]) for j in range(N)]
    )
    psi_values = np.column_stack(
        [transform_inverse(basis, modes[M:, j]) for j in range(N)]
    )

    # D as a weighted Gram matrix: exact symmetry and PSD by construction.
    root = np.sqrt(w * basis.quad_weight)[:, None]
    D = (root * phi_values).T @ (root * phi_values) + (root * psi_values).T @ (
        root * psi_values
    )

    B = np.empty((2 * M, N))
    for j in range(N):
        yj = ScalarField.from_values(basis, w * phi_values[:, j])
        zj = ScalarField.from_values(basis, w * psi_values[:, j])
        B[:M, j] = yj.coeffs
        B[M:, j] = zj.coeffs

    quarter = 0.25 * (omega[1] - omega[0])
    return Actuator(
        omega=omega,
        omega0=(omega[0] + quarter, omega[1] - quarter),
        weight=weight,
        lambdas=lambdas,
        modes=modes,
        phi_values=phi_values,
        psi_values=psi_values,
        D_matrix=D,
        B_matrix=B,
        basis=basis,
    )


def apply_B(act: Actuator, W: np.ndarray) -> tuple[ScalarField, ScalarField]:
    """Forcing pair (sum_i w phi_i W_i, sum_i w psi_i W_i).

    Formed pointwise at the nodes so the result vanishes identically outside
    the support of the weight.
    """
    W = np.asarray(W, dtype=float)
    if W.shape != (act.N,):
        raise ValueError(f"expected {act.N} control amplitudes, got shape {W.shape}")
    w = act.weight.values
    fy = ScalarField.from_values(act.basis, w * (act.phi_values @ W))
    fz = ScalarField.from_values(act.basis, w * (act.psi_values @ W))
    return fy, fz


def apply_B_star(act: Actuator, q: tuple[ScalarField, ScalarField]) -> np.ndarray:
    """Adjoint map: (B* q)_i = int w (phi_i q_1 + psi_i q_2) dx."""
    q1, q2 = q
    stacked = np.concatenate([q1.coeffs, q2.coeffs])
    return act.B_matrix.T @ stacked


@dataclass(frozen=True)
class KalmanCertificate:
    det: float
    lambda_min: float
    lambda_max: float
    ok: bool


def kalman_certificate(act: Actuator) -> KalmanCertificate:
    """Controllability check on the coupling matrix D.

    Uses the smallest eigenvalue of the (symmetric PSD) Gram matrix rather
    than the bare determinant, which is fragile under scaling and repeated
    plant eigenvalues.
    """
    eigs = np.linalg.eigvalsh(act.D_matrix)
    lam_min, lam_max = float(eigs[0]), float(eigs[-1])
    det = float(np.linalg.det(act.D_matrix))
    return KalmanCertificate(
        det=det, lambda_min=lam_min, lambda_max=lam_max, ok=lam_min > 1e-12 * lam_max
    )


@dataclass
class NullControlPlan:
    """Minimum-energy open-loop control steering the unstable modes to zero.

    With Lambda = diag(lambda_1..N) and the Gramian
    G = int_0^T0 exp(-Lambda s) D D^T exp(-Lambda s) ds (entrywise closed
    form since Lambda is diagonal), the control is

        W(t) = D^T exp(-Lambda (T0 - t)) G^{-1} (-exp(-Lambda T0) xi0).
    """

    T0: float
    t_nodes: np.ndarray  # Gauss-Legendre nodes on [0, T0]
    t_weights: np.ndarray
    W_samples: np.ndarray  # (n_nodes, N)
    energy: float
    xi0: np.ndarray
    lambdas: np.ndarray
    D_matrix: np.ndarray
    eta: np.ndarray = field(repr=False, default=None)  # G^{-1}(-e^{-Lambda T0} xi0)
    gramian_cond: float = np.nan
    steering_error: float = np.nan

    def evaluate_raw(self, t: float) -> np.ndarray:
        """The control formula without the horizon cutoff."""
        return self.D_matrix.T @ (np.exp(-self.lambdas * (self.T0 - t)) * self.eta)

    def evaluate(self, t: float) -> np.ndarray:
        """W(t); zero for t outside [0, T0)."""
        if t < 0.0 or t >= self.T0:
            return np.zeros_like(self.xi0)
        return self.evaluate_raw(t)


def _gramian_closed_form(lambdas: np.ndarray, D: np.ndarray, T0: float) -> np.ndarray:
    """G_ij = (D D^T)_ij * int_0^T0 exp(-(lambda_i + lambda_j) s) ds."""
    DDt = D @ D.T
    s = lambdas[:, None] + lambdas[None, :]
    safe = np.where(s == 0.0, 1.0, s)
    factor = np.where(s == 0.0, T0, -np.expm1(-s * T0) / safe)
    return DDt * factor


def rk4_propagate(f, x0: np.ndarray, t0: float, t1: float, steps: int) -> np.ndarray:
    """Classical RK4 with fixed step; independent oracle for the modal ODEs."""
    x = np.array(x0, dtype=float)
    h = (t1 - t0) / steps
    t = t0
    for _ in range(steps):
        k1 = f(t, x)
        k2 = f(t + 0.5 * h, x + 0.5 * h * k1)
        k3 = f(t + 0.5 * h, x + 0.5 * h * k2)
        k4 = f(t + h, x + h * k3)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t += h
    return x


def null_control(
    act: Actuator,
    plant: LinearizedPlant,
    xi0: np.ndarray,
    T0: float = 1.0,
    n_nodes: int = 512,
    check_steps: int = 10_000,
) -> NullControlPlan:
    """Construct and verify the minimum-energy null control on [0, T0]."""
    if T0 <= 0:
        raise ValueError(f"horizon must be positive, got {T0}")
    cert = kalman_certificate(act)
    if not cert.ok:
        raise GramianConditionError(
            f"coupling matrix is numerically singular (lambda_min={cert.lambda_min:.3e})"
        )
    xi0 = np.asarray(xi0, dtype=float)
    if xi0.shape != (act.N,):
        raise ValueError(f"expected {act.N} unstable coordinates, got {xi0.shape}")

    lambdas, D = act.lambdas, act.D_matrix
    G = _gramian_closed_form(lambdas, D, T0)
    cond = float(np.linalg.cond(G))
    if cond > GRAMIAN_CONDITION_LIMIT:
        raise GramianConditionError(
            f"steering Gramian condition {cond:.3e} exceeds {GRAMIAN_CONDITION_LIMIT:.0e}"
        )
    eta = np.linalg.solve(G, -np.exp(-lambdas * T0) * xi0)

    nodes, weights = np.polynomial.legendre.leggauss(n_nodes)
    t_nodes = 0.5 * T0 * (nodes + 1.0)
    t_weights = 0.5 * T0 * weights

    plan = NullControlPlan(
        T0=T0,
        t_nodes=t_nodes,
        t_weights=t_weights,
        W_samples=np.zeros((n_nodes, act.N)),
        energy=0.0,
        xi0=xi0,
        lambdas=lambdas,
        D_matrix=D,
        eta=eta,
    )
    plan.W_samples = np.array([plan.evaluate(t) for t in t_nodes])
    plan.energy = float(np.sum(t_weights * np.sum(plan.W_samples**2, axis=1)))
    plan.gramian_cond = cond

    def ode(t, xi):
        return -lambdas * xi + D @ plan.evaluate(t)

    xi_T = rk4_propagate(ode, xi0, 0.0, T0, check_steps)
    plan.steering_error = float(np.linalg.norm(xi_T))
    return plan


def open_loop_extend(plan: NullControlPlan):
    """Zero-extension of the plan's control to [0, infinity) as a callable."""

    def control(t: float) -> np.ndarray:
        return plan.evaluate(t)

    return control


def _phi1(z: np.ndarray) -> np.ndarray:
    small = np.abs(z) < 1e-5
    safe = np.where(small, 1.0, z)
    out = np.expm1(safe) / safe
    return np.where(small, 1.0 + z / 2.0 + z**2 / 6.0, out)


def _phi2(z: np.ndarray) -> np.ndarray:
    small = np.abs(z) < 1e-5
    safe = np.where(small, 1.0, z)
    out = (np.expm1(safe) - safe) / safe**2
    return np.where(small, 0.5 + z / 6.0 + z**2 / 24.0, out)


def propagate_linear_with_control(
    plant: LinearizedPlant,
    act: Actuator,
    control,
    x0: np.ndarray,
    t_end: float,
    dt: float,
    record_times: np.ndarray,
) -> np.ndarray:
    """Linear open-loop trajectory x' = -Op x + B W(t) in eigen-coordinates.

    Exponential trapezoidal stepping handles the stiff stable branch exactly
    when the control vanishes, so the post-steering tail decays at the true
    modal rates.  Returns the stacked eigen-coordinate states at the
    requested times (nearest step).
    """
    lam = plant.eigenvalues
    V = plant.eigenvectors
    B_e = V.T @ act.B_matrix
    xi = V.T @ np.asarray(x0, dtype=float)

    z = -lam * dt
    decay = np.exp(z)
    w1 = dt * (_phi1(z) - _phi2(z))
    w2 = dt * _phi2(z)

    n_steps = int(round(t_end / dt))
    record_idx = np.clip(np.round(np.asarray(record_times) / dt).astype(int), 0, n_steps)
    out = np.empty((len(record_times), len(xi)))
    pending = {}
    for j, idx in enumerate(record_idx):
        pending.setdefault(int(idx), []).append(j)
    for j in pending.get(0, []):
        out[j] = xi
    f_now = B_e @ control(0.0)
    for n in range(1, n_steps + 1):
        f_next = B_e @ control(n * dt)
        xi = decay * xi + w1 * f_now + w2 * f_next
        f_now = f_next
        for j in pending.get(n, []):
            out[j] = xi
    return out
