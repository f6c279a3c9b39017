"""Cosine-spectral discretization of the interval (0, L) with Neumann boundaries.

The discretization uses the orthonormal cosine basis

    e_0(x) = sqrt(1/L),   e_k(x) = sqrt(2/L) cos(k pi x / L),  k = 1..M-1,

sampled at the M midpoint collocation nodes x_j = (j + 1/2) L / M.  On this
basis every operator we need is diagonal:

    -Laplacian           ->  kappa_k = (k pi / L)^2
    A = -Laplacian + I   ->  mu_k    = 1 + kappa_k
    A^alpha              ->  mu_k^alpha   (any real alpha, since mu_k >= 1)

The forward/inverse transforms are the orthonormal DCT-II pair on the midpoint
grid, so round trips are exact to machine precision and the discrete Parseval
identity  sum_k c_k^2 = (L/M) sum_j f_j^2  holds.

Pointwise (nonlinear) products are evaluated on a zero-padded grid of 2M
points.  This exceeds the 3/2-rule padding and makes quadratic *and* cubic
products of band-limited fields alias-free in the retained M modes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.fft

__all__ = [
    "SpectralBasis",
    "ScalarField",
    "transform_forward",
    "transform_inverse",
    "apply_A_power",
    "norm_D_alpha",
    "laplacian",
    "pointwise_product",
    "gradient_values",
    "gradient_squared",
]

# Padding multiplier for dealiased products; 2M >= ceil(3M/2) and is exact for
# cubic terms, which the 3/2 rule alone is not.
PAD_FACTOR = 2


@dataclass(frozen=True)
class SpectralBasis:
    """Orthonormal cosine basis on (0, L) with M modes and midpoint nodes."""

    L: float = 1.0
    M: int = 64
    kappa: np.ndarray = field(init=False, repr=False, compare=False)
    mu: np.ndarray = field(init=False, repr=False, compare=False)
    nodes: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.L <= 0:
            raise ValueError(f"domain length must be positive, got {self.L}")
        if self.M < 2:
            raise ValueError(f"need at least 2 modes, got {self.M}")
        k = np.arange(self.M)
        object.__setattr__(self, "kappa", (k * np.pi / self.L) ** 2)
        object.__setattr__(self, "mu", 1.0 + self.kappa)
        object.__setattr__(self, "nodes", (k + 0.5) * self.L / self.M)

    def nodes_padded(self, P: int) -> np.ndarray:
        return (np.arange(P) + 0.5) * self.L / P

    def basis_function(self, k: int, x: np.ndarray) -> np.ndarray:
        """Evaluate e_k at arbitrary points x."""
        x = np.asarray(x, dtype=float)
        if k == 0:
            return np.full_like(x, np.sqrt(1.0 / self.L))
        return np.sqrt(2.0 / self.L) * np.cos(k * np.pi * x / self.L)

    @property
    def quad_weight(self) -> float:
        """Midpoint quadrature weight L/M for the collocation nodes."""
        return self.L / self.M


def transform_forward(basis: SpectralBasis, values: np.ndarray) -> np.ndarray:
    """Collocation values -> coefficients of the orthonormal cosine basis."""
    values = np.asarray(values, dtype=float)
    if values.shape != (basis.M,):
        raise ValueError(
            f"expected {basis.M} collocation values, got shape {values.shape}"
        )
    return scipy.fft.dct(values, type=2, norm="ortho") * np.sqrt(basis.L / basis.M)


def transform_inverse(basis: SpectralBasis, coeffs: np.ndarray) -> np.ndarray:
    """Coefficients -> values at the M midpoint collocation nodes."""
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != (basis.M,):
        raise ValueError(f"expected {basis.M} coefficients, got shape {coeffs.shape}")
    return scipy.fft.idct(coeffs / np.sqrt(basis.L / basis.M), type=2, norm="ortho")


def _values_on_grid(basis: SpectralBasis, coeffs: np.ndarray, P: int) -> np.ndarray:
    """Evaluate the field with the given coefficients on a P-point midpoint grid."""
    padded = np.zeros(P)
    padded[: basis.M] = coeffs
    return scipy.fft.idct(padded / np.sqrt(basis.L / P), type=2, norm="ortho")


def _coeffs_from_grid(basis: SpectralBasis, values: np.ndarray) -> np.ndarray:
    """Transform values on a fine midpoint grid and truncate to the M modes."""
    P = len(values)
    full = scipy.fft.dct(values, type=2, norm="ortho") * np.sqrt(basis.L / P)
    return full[: basis.M].copy()


@dataclass
class ScalarField:
    """One scalar unknown: modal coefficients plus cached collocation values."""

    basis: SpectralBasis
    coeffs: np.ndarray
    _values: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def from_coeffs(cls, basis: SpectralBasis, coeffs) -> "ScalarField":
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != (basis.M,):
            raise ValueError(f"expected {basis.M} coefficients, got {coeffs.shape}")
        return cls(basis, coeffs)

    @classmethod
    def from_values(cls, basis: SpectralBasis, values) -> "ScalarField":
        values = np.asarray(values, dtype=float)
        return cls(basis, transform_forward(basis, values), values.copy())

    @classmethod
    def from_function(cls, basis: SpectralBasis, fn) -> "ScalarField":
        return cls.from_values(basis, fn(basis.nodes))

    @classmethod
    def zero(cls, basis: SpectralBasis) -> "ScalarField":
        return cls(basis, np.zeros(basis.M))

    @classmethod
    def constant(cls, basis: SpectralBasis, value: float) -> "ScalarField":
        coeffs = np.zeros(basis.M)
        coeffs[0] = value * np.sqrt(basis.L)
        return cls(basis, coeffs)

    @property
    def values(self) -> np.ndarray:
        if self._values is None:
            self._values = transform_inverse(self.basis, self.coeffs)
        return self._values

    @property
    def mean(self) -> float:
        """Spatial mean (1/L) int f dx, carried exactly by the k=0 coefficient."""
        return float(self.coeffs[0]) / np.sqrt(self.basis.L)

    def norm_L2(self) -> float:
        return float(np.linalg.norm(self.coeffs))

    def __add__(self, other: "ScalarField") -> "ScalarField":
        _check_same_basis(self, other)
        return ScalarField(self.basis, self.coeffs + other.coeffs)

    def __sub__(self, other: "ScalarField") -> "ScalarField":
        _check_same_basis(self, other)
        return ScalarField(self.basis, self.coeffs - other.coeffs)

    def __mul__(self, scalar: float) -> "ScalarField":
        return ScalarField(self.basis, self.coeffs * float(scalar))

    __rmul__ = __mul__


def _check_same_basis(*fields: ScalarField) -> SpectralBasis:
    basis = fields[0].basis
    for f in fields[1:]:
        if f.basis is not basis and (f.basis.L != basis.L or f.basis.M != basis.M):
            raise ValueError("fields live on different bases")
    return basis


def apply_A_power(f: ScalarField, alpha: float) -> ScalarField:
    """Apply A^alpha = (-Laplacian + I)^alpha, diagonal with weights mu_k^alpha."""
    return ScalarField(f.basis, f.coeffs * f.basis.mu**alpha)


def norm_D_alpha(f: ScalarField, alpha: float) -> float:
    """Graph norm ||A^alpha f||_{L^2} = sqrt(sum mu_k^{2 alpha} c_k^2)."""
    return float(np.sqrt(np.sum(f.basis.mu ** (2.0 * alpha) * f.coeffs**2)))


def laplacian(f: ScalarField) -> ScalarField:
    """Neumann Laplacian, diagonal with weights -kappa_k; annihilates the mean."""
    return ScalarField(f.basis, -f.basis.kappa * f.coeffs)


def pointwise_product(fs: list[ScalarField], dealias: bool = True) -> ScalarField:
    """Pointwise product of 2 or 3 fields, dealiased by zero padding.

    With dealias on, the factors are evaluated on a 2M-point grid (>= the
    ceil(3M/2) padding required by the 3/2 rule), multiplied pointwise and
    truncated back to M modes; products of band-limited factors are then
    exact projections.  With dealias off the product is formed on the native
    M-point grid.
    """
    if len(fs) not in (2, 3):
        raise ValueError(f"pointwise_product takes 2 or 3 fields, got {len(fs)}")
    basis = _check_same_basis(*fs)
    if dealias:
        P = PAD_FACTOR * basis.M
        prod = np.ones(P)
        for f in fs:
            prod *= _values_on_grid(basis, f.coeffs, P)
        return ScalarField(basis, _coeffs_from_grid(basis, prod))
    prod = np.ones(basis.M)
    for f in fs:
        prod *= f.values
    return ScalarField.from_values(basis, prod)


_SINE_MATRICES: dict[tuple[float, int, int], np.ndarray] = {}


def _sine_matrix(basis: SpectralBasis, P: int) -> np.ndarray:
    """P x M matrix  sin(k pi x_j / L)  on the P-point midpoint grid (cached)."""
    key = (basis.L, basis.M, P)
    mat = _SINE_MATRICES.get(key)
    if mat is None:
        x = basis.nodes_padded(P)
        k = np.arange(basis.M)
        mat = np.sin(np.outer(x, k) * np.pi / basis.L)
        _SINE_MATRICES[key] = mat
    return mat


def gradient_values(f: ScalarField, P: int | None = None) -> np.ndarray:
    """Values of f' on a P-point midpoint grid via sine-series differentiation.

    d/dx e_k = -sqrt(2/L) (k pi / L) sin(k pi x / L); the k = 0 column is zero.
    """
    basis = f.basis
    if P is None:
        P = basis.M
    k = np.arange(basis.M)
    sine_coeffs = -f.coeffs * np.sqrt(2.0 / basis.L) * (k * np.pi / basis.L)
    return _sine_matrix(basis, P) @ sine_coeffs


def gradient_squared(f: ScalarField) -> ScalarField:
    """|f'|^2 as a field: differentiate spectrally, square on the padded grid."""
    basis = f.basis
    P = PAD_FACTOR * basis.M
    grad = gradient_values(f, P)
    return ScalarField(basis, _coeffs_from_grid(basis, grad * grad))
