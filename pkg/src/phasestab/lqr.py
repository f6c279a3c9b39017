"""Riccati synthesis of the stabilizing feedback -B B* R.

The gain comes from the infinite-horizon quadratic problem with state cost
||A^{3/2} y||^2 + ||A^{3/4} z||^2 and identity control cost.  Its value
function (1/2) x^T R x satisfies, in the symmetric form used here,

    Op R + R Op + R B B^T R = Ahat,      Ahat = diag(mu_k^3, mu_k^{3/2}),

where Op is the (self-adjoint, block-diagonal) plant operator; the dynamics
are x' = -Op x + B W and the optimal feedback is W = -B^T R x.  This is the
standard CARE for A = -Op, and the quadratic-form identity

    2 x^T R Op x + ||B^T R x||^2 = x^T Ahat x

is the residual we certify.  (The factor-2 form with a one-sided product
coincides when R and Op commute; that commutation is not assumed at finite
M and is only reported as a diagnostic.)

Two independent solution routes are provided:

* ``newton``: Newton-Kleinman iteration with dense Bartels-Stewart Lyapunov
  inner solves, initialized by a small Hamiltonian-eigenvector LQR solve on
  the unstable block (stabilizing because the complement is open-loop
  stable).
* ``integrate``: marches the differential Riccati equation from P(0) = 0 to
  steady state with an exponential-Euler step in the operator eigenbasis.
  The linear part is handled exactly entrywise, so the fixed point of the
  marching map is the exact algebraic solution independent of step size.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .actuator import Actuator, apply_B
from .linearization import ZERO_EIGENVALUE_TOL, LinearizedPlant
from .spectral import ScalarField

__all__ = [
    "RiccatiSolution",
    "RiccatiError",
    "ClosedLoopSpectrum",
    "solve_care",
    "solve_care_dense",
    "riccati_residual",
    "feedback_force",
    "closed_loop_spectrum",
]


class RiccatiError(RuntimeError):
    """Riccati solve failed; carries the iterate log for diagnosis."""

    def __init__(self, message: str, history: list[dict] | None = None):
        super().__init__(message)
        self.history = history or []


@dataclass
class RiccatiSolution:
    R_matrix: np.ndarray  # (2M, 2M) symmetric positive definite
    K_gain: np.ndarray  # (N, 2M) = B^T R
    residual_rel: float
    closed_loop_eigs: np.ndarray
    margin: float
    Q_diag: np.ndarray
    method: str
    iterations: int
    residual_history: list[float] = field(default_factory=list, repr=False)
    commutator_ratio: float = np.nan  # ||Op R - R Op|| / ||R||, diagnostic only

    @property
    def dim(self) -> int:
        return self.R_matrix.shape[0]


def _probe_residual(
    R: np.ndarray,
    A_op: np.ndarray,
    B: np.ndarray,
    Q_diag: np.ndarray,
    samples: int,
    rng: np.random.Generator,
) -> float:
    """max over random unit x of |x^T(R Op + Op R)x + ||B^T R x||^2 - x^T Ahat x| / x^T Ahat x."""
    worst = 0.0
    dim = R.shape[0]
    for _ in range(samples):
        x = rng.standard_normal(dim)
        x /= np.linalg.norm(x)
        Rx = R @ x
        quad = 2.0 * Rx @ (A_op @ x) + np.sum((B.T @ Rx) ** 2)
        target = Q_diag @ (x * x)
        worst = max(worst, abs(quad - target) / target)
    return worst


def _care_hamiltonian(A: np.ndarray, B: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """Small-matrix CARE A^T P + P A - P B B^T P + Q = 0 via the Hamiltonian.

    The stable invariant subspace [X; Y] of H = [[A, -BB^T], [-Q, -A^T]]
    yields P = Y X^{-1}.
    """
    n = A.shape[0]
    H = np.block([[A, -B @ B.T], [-Q, -A.T]])
    eigvals, eigvecs = np.linalg.eig(H)
    stable = eigvals.real < 0
    if stable.sum() != n:
        raise RiccatiError(
            f"Hamiltonian has {int(stable.sum())} stable eigenvalues, expected {n}"
        )
    basis = eigvecs[:, stable]
    X, Y = basis[:n], basis[n:]
    try:
        P = np.real(Y @ np.linalg.solve(X, np.eye(n, dtype=complex)))
    except np.linalg.LinAlgError:
        raise RiccatiError(
            "stable invariant subspace is degenerate; the unstable block is "
            "not stabilizable through this actuator"
        )
    return 0.5 * (P + P.T)


def _newton_kleinman(
    A: np.ndarray,
    B: np.ndarray,
    Q_diag: np.ndarray,
    K0: np.ndarray,
    tol: float,
    max_iters: int,
    probe_samples: int = 32,
) -> tuple[np.ndarray, list[dict]]:
    """Kleinman iteration: Lyapunov solve for the closed loop, then K = B^T X."""
    n = A.shape[0]
    Q = np.diag(Q_diag)
    K = K0
    history: list[dict] = []
    X = None
    for it in range(max_iters):
        A_cl = A - B @ K
        margin = -float(np.max(np.linalg.eigvals(A_cl).real))
        if margin <= 0.0:
            raise RiccatiError(
                f"iterate {it} lost the stabilizing property (margin {margin:.3e})",
                history,
            )
        rhs = -(Q + K.T @ K)
        try:
            X = scipy.linalg.solve_continuous_lyapunov(A_cl.T, rhs)
        except np.linalg.LinAlgError as exc:  # pragma: no cover - defensive
            raise RiccatiError(f"Lyapunov solve failed at iterate {it}: {exc}", history)
        X = 0.5 * (X + X.T)
        K = B.T @ X
        # identical probe set every iteration so residuals are comparable
        res = _probe_residual(X, -A, B, Q_diag, probe_samples, np.random.default_rng(12345))
        history.append({"iteration": it, "margin": margin, "residual": res})
        if res <= tol:
            return X, history
    return X, history


def _care_integrate(
    lam: np.ndarray,
    S_e: np.ndarray,
    Q_e: np.ndarray,
    tol_steady: float = 1e-12,
    h_max: float = 0.1,
    max_steps: int = 5_000_000,
) -> tuple[np.ndarray, int]:
    """March dP/dt = -(lam_i+lam_j) P + Q_e - P S_e P to rest (eigenbasis coords).

    Exponential Euler: the diagonal linear part is integrated exactly, the
    rest explicitly with an adaptive step bounded by the local Lipschitz size
    of the quadratic term.  The fixed point solves the algebraic equation
    exactly for any step size, so only convergence speed depends on h.
    """
    n = len(lam)
    s = lam[:, None] + lam[None, :]
    zero = s == 0.0
    safe = np.where(zero, 1.0, s)
    P = np.zeros((n, n))
    for step in range(1, max_steps + 1):
        SP = S_e @ P
        N = Q_e - P @ SP
        lipschitz = 2.0 * np.linalg.norm(SP, "fro")
        h = min(h_max, 1.0 / (lipschitz + 1e-12))
        E = np.exp(-s * h)
        phi = np.where(zero, h, (1.0 - E) / safe)
        P_new = E * P + phi * N
        P_new = 0.5 * (P_new + P_new.T)
        delta = np.linalg.norm(P_new - P, "fro") / (h * max(np.linalg.norm(P, "fro"), 1.0))
        P = P_new
        if delta <= tol_steady:
            return P, step
    raise RiccatiError(f"differential Riccati marching did not settle in {max_steps} steps")


def _solve_care_core(
    A_op: np.ndarray,
    B: np.ndarray,
    Q_diag: np.ndarray,
    lam: np.ndarray,
    V: np.ndarray,
    method: str,
    tol: float,
    max_iters: int,
) -> tuple[np.ndarray, int, list[dict]]:
    """Shared solver body; (lam, V) is an orthonormal eigendecomposition of A_op."""
    A = -A_op
    N_u = int(np.sum(lam <= ZERO_EIGENVALUE_TOL))

    if method == "newton":
        if N_u > 0:
            V_u = V[:, :N_u]
            A_u = -np.diag(lam[:N_u])
            B_u = V_u.T @ B
            Q_u = V_u.T @ np.diag(Q_diag) @ V_u
            P_u = _care_hamiltonian(A_u, B_u, Q_u)
            K0 = (B_u.T @ P_u) @ V_u.T
        else:
            K0 = np.zeros((B.shape[1], A.shape[0]))
        X, history = _newton_kleinman(A, B, Q_diag, K0, tol, max_iters)
        return 0.5 * (X + X.T), len(history), history

    if method == "integrate":
        B_e = V.T @ B
        S_e = B_e @ B_e.T
        Q_e = V.T @ np.diag(Q_diag) @ V
        Q_e = 0.5 * (Q_e + Q_e.T)
        P_e, steps = _care_integrate(lam, S_e, Q_e)
        R = V @ P_e @ V.T
        return 0.5 * (R + R.T), steps, []

    raise ValueError(f"unknown Riccati method {method!r}; use 'newton' or 'integrate'")


def solve_care_dense(
    A_op: np.ndarray,
    B: np.ndarray,
    Q_diag: np.ndarray,
    method: str = "newton",
    tol: float = 1e-9,
    max_iters: int = 50,
) -> tuple[np.ndarray, int, list[dict]]:
    """Solve Op R + R Op + R B B^T R = diag(Q_diag) for symmetric Op.

    Returns (R, iterations, history).  ``A_op`` is the accretive operator of
    the dynamics x' = -A_op x + B W.  The eigendecomposition is taken with a
    dense symmetric solve; for the modal plant, prefer solve_care, which
    reuses the exact per-block eigenpairs (the conserved zeros must not be
    blurred by dense-solver noise).
    """
    A_op = np.asarray(A_op, dtype=float)
    B = np.asarray(B, dtype=float).reshape(A_op.shape[0], -1)
    Q_diag = np.asarray(Q_diag, dtype=float)
    lam, V = np.linalg.eigh(A_op)
    return _solve_care_core(A_op, B, Q_diag, lam, V, method, tol, max_iters)


def solve_care(
    plant: LinearizedPlant,
    act: Actuator,
    method: str = "newton",
    tol: float = 1e-9,
    max_iters: int = 50,
    residual_samples: int = 100,
) -> RiccatiSolution:
    """Synthesize the feedback for the assembled plant and actuator."""
    A_op = plant.operator_matrix()
    B = act.B_matrix
    Q_diag = plant.state_weight_diagonal()

    R, iterations, history = _solve_care_core(
        A_op,
        B,
        Q_diag,
        plant.eigenvalues,
        plant.eigenvectors,
        method=method,
        tol=tol,
        max_iters=max_iters,
    )

    K = B.T @ R
    A_cl = -(A_op + B @ K)
    eigs = np.linalg.eigvals(A_cl)
    margin = -float(np.max(eigs.real))
    res = _probe_residual(
        R, A_op, B, Q_diag, residual_samples, np.random.default_rng(202)
    )
    commutator = np.linalg.norm(A_op @ R - R @ A_op, "fro") / np.linalg.norm(R, "fro")

    return RiccatiSolution(
        R_matrix=R,
        K_gain=K,
        residual_rel=res,
        closed_loop_eigs=eigs,
        margin=margin,
        Q_diag=Q_diag,
        method=method,
        iterations=iterations,
        residual_history=[h["residual"] for h in history],
        commutator_ratio=float(commutator),
    )


def riccati_residual(
    sol: RiccatiSolution,
    plant: LinearizedPlant,
    act: Actuator,
    samples: int = 100,
    seed: int = 0,
) -> float:
    """Re-certify the quadratic-form identity on fresh random probes."""
    return _probe_residual(
        sol.R_matrix,
        plant.operator_matrix(),
        act.B_matrix,
        sol.Q_diag,
        samples,
        np.random.default_rng(seed),
    )


def feedback_force(
    sol: RiccatiSolution, act: Actuator, state: tuple[ScalarField, ScalarField]
) -> tuple[tuple[ScalarField, ScalarField], np.ndarray]:
    """Feedback forcing -B B^T R (y, z) and the N amplitudes w = -B^T R (y, z)."""
    y, z = state
    x = np.concatenate([y.coeffs, z.coeffs])
    w = -(sol.K_gain @ x)
    return apply_B(act, w), w


@dataclass(frozen=True)
class ClosedLoopSpectrum:
    eigs: np.ndarray
    margin: float

    @property
    def ok(self) -> bool:
        return self.margin > 0.0


def closed_loop_spectrum(
    sol: RiccatiSolution, plant: LinearizedPlant, act: Actuator
) -> ClosedLoopSpectrum:
    """Spectrum of -(Op + B B^T R); margin > 0 certifies linear stability."""
    A_cl = -(plant.operator_matrix() + act.B_matrix @ sol.K_gain)
    eigs = np.linalg.eigvals(A_cl)
    return ClosedLoopSpectrum(eigs=eigs, margin=-float(np.max(eigs.real)))
