"""
Dirichlet sine eigenbasis on intervals and rectangles.

Fields are coefficient vectors in the L2-orthonormal basis
e_j(x) = sqrt(2/l) sin(j pi x / l) (tensor products on rectangles), ordered
by ascending eigenvalue. Physical samples live on the interior points of a
uniform grid, where the type-I discrete sine transform is an exact
quadrature for every resolved mode.
"""

import math
import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence, Tuple, Union

import numpy as np
from scipy import fft

from errors import ConfigurationError, ShapeError

logger = logging.getLogger(__name__)

PhysicalSamples = np.ndarray


def _per_axis(value: Union[int, float, Sequence], dims: int, name: str) -> tuple:
    if isinstance(value, (int, float, np.integer, np.floating)):
        return (value,) * dims
    values = tuple(value)
    if len(values) != dims:
        raise ConfigurationError(f"{name} needs {dims} entries, got {len(values)}")
    return values


@dataclass(frozen=True)
class DomainSpec:
    """Rectangle (0, l_1) x ... with a mode truncation and a quadrature grid per axis."""
    dims: int
    lengths: Tuple[float, ...]
    modes: Tuple[int, ...]
    quadrature_points: Tuple[int, ...] = ()

    def __post_init__(self):
        if self.dims not in (1, 2):
            raise ConfigurationError(f"dims must be 1 or 2, got {self.dims}")
        lengths = tuple(float(v) for v in _per_axis(self.lengths, self.dims, "lengths"))
        modes = tuple(int(v) for v in _per_axis(self.modes, self.dims, "modes"))
        if any(not math.isfinite(v) or v <= 0 for v in lengths):
            raise ConfigurationError(f"lengths must be positive, got {lengths}")
        if any(m < 1 for m in modes):
            raise ConfigurationError(f"modes must be >= 1, got {modes}")
        if self.quadrature_points:
            points = tuple(int(v) for v in _per_axis(self.quadrature_points, self.dims, "quadrature_points"))
        else:
            # 3/2-rule, raised to the 2N floor that dealiases cubic terms
            points = tuple(max(math.ceil(1.5 * m), 2 * m) for m in modes)
        for m, q in zip(modes, points):
            if q < 2 * m:
                raise ConfigurationError(f"quadrature_points {q} below 2*modes ({2 * m})")
        object.__setattr__(self, "lengths", lengths)
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "quadrature_points", points)

    @property
    def total_modes(self) -> int:
        return math.prod(self.modes)


@dataclass(frozen=True, eq=False)
class BasisTable:
    eigenvalues: np.ndarray  # ascending
    normalization: float  # product of sqrt(2/l) over axes
    multi_indices: np.ndarray  # (size, dims), 1-based mode numbers
    grid_index: np.ndarray  # flat position of each mode in the quadrature-shaped array

    @property
    def size(self) -> int:
        return self.eigenvalues.shape[0]

    @property
    def lambda1(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def lambda_max(self) -> float:
        return float(self.eigenvalues[-1])


@lru_cache(maxsize=32)
def build_basis(domain: DomainSpec) -> BasisTable:
    """Analytic Dirichlet eigenpairs, sorted by eigenvalue (ties by multi-index)."""
    grids = np.meshgrid(*[np.arange(1, m + 1) for m in domain.modes], indexing="ij")
    indices = np.stack([g.ravel() for g in grids], axis=1)
    eigenvalues = np.zeros(indices.shape[0])
    for axis, length in enumerate(domain.lengths):
        eigenvalues += (indices[:, axis] * np.pi / length) ** 2
    order = np.argsort(eigenvalues, kind="stable")
    indices = indices[order]
    eigenvalues = eigenvalues[order]
    grid_index = np.ravel_multi_index(tuple((indices - 1).T), domain.quadrature_points)
    normalization = math.prod(math.sqrt(2.0 / length) for length in domain.lengths)
    for arr in (indices, eigenvalues, grid_index):
        arr.setflags(write=False)
    return BasisTable(eigenvalues, normalization, indices, grid_index)


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Coefficients y_j of a function in the sine eigenbasis."""
    coeffs: np.ndarray

    def __post_init__(self):
        arr = np.array(self.coeffs, dtype=float)
        if arr.ndim != 1:
            raise ShapeError(f"coefficients must be one-dimensional, got shape {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "coeffs", arr)

    @classmethod
    def zeros(cls, size: int) -> "SpectralField":
        return cls(np.zeros(size))

    @classmethod
    def unit(cls, size: int, index: int, scale: float = 1.0) -> "SpectralField":
        """scale * e_{index+1} (0-based position in eigenvalue order)."""
        coeffs = np.zeros(size)
        coeffs[index] = scale
        return cls(coeffs)

    @property
    def size(self) -> int:
        return self.coeffs.shape[0]

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.coeffs)))

    def _other(self, other: "SpectralField") -> np.ndarray:
        if other.size != self.size:
            raise ShapeError(f"field sizes differ: {self.size} vs {other.size}")
        return other.coeffs

    def __add__(self, other: "SpectralField") -> "SpectralField":
        return SpectralField(self.coeffs + self._other(other))

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        return SpectralField(self.coeffs - self._other(other))

    def __neg__(self) -> "SpectralField":
        return SpectralField(-self.coeffs)

    def __mul__(self, scalar: float) -> "SpectralField":
        return SpectralField(self.coeffs * scalar)

    __rmul__ = __mul__

    def __truediv__(self, scalar: float) -> "SpectralField":
        return SpectralField(self.coeffs / scalar)

    def __repr__(self) -> str:
        return f"SpectralField(size={self.size}, norm={np.linalg.norm(self.coeffs):.6g})"


def _check_aligned(field: SpectralField, basis: BasisTable) -> None:
    if field.size != basis.size:
        raise ShapeError(f"field has {field.size} coefficients, basis has {basis.size} modes")


def quadrature_grid(domain: DomainSpec) -> Tuple[np.ndarray, ...]:
    """Interior grid points x_k = k l / (M + 1), k = 1..M, per axis."""
    return tuple(
        length * np.arange(1, m + 1) / (m + 1)
        for length, m in zip(domain.lengths, domain.quadrature_points)
    )


def quadrature_weight(domain: DomainSpec) -> float:
    """Cell volume of the uniform grid (trapezoid weight of interior points)."""
    return math.prod(length / (m + 1) for length, m in zip(domain.lengths, domain.quadrature_points))


def to_physical(field: SpectralField, domain: DomainSpec) -> PhysicalSamples:
    """Evaluate sum_j y_j e_j on the quadrature grid."""
    basis = build_basis(domain)
    _check_aligned(field, basis)
    padded = np.zeros(domain.quadrature_points)
    padded.flat[basis.grid_index] = field.coeffs
    # unnormalized DST-I carries a factor 2 per axis
    return fft.dstn(padded, type=1) * (basis.normalization / 2 ** domain.dims)


def from_physical(samples: PhysicalSamples, domain: DomainSpec) -> SpectralField:
    """L2 projection onto the resolved modes by discrete sine quadrature."""
    samples = np.asarray(samples, dtype=float)
    if samples.shape != domain.quadrature_points:
        raise ShapeError(f"samples have shape {samples.shape}, grid is {domain.quadrature_points}")
    basis = build_basis(domain)
    transformed = fft.dstn(samples, type=1)
    scale = quadrature_weight(domain) * basis.normalization / 2 ** domain.dims
    return SpectralField(transformed.flat[basis.grid_index] * scale)


@lru_cache(maxsize=64)
def sobolev_weights(basis: BasisTable, s: float) -> np.ndarray:
    """lambda_j ** s, the diagonal of A^s."""
    if s < 0:
        raise ConfigurationError(f"negative Sobolev order {s} is not supported")
    weights = basis.eigenvalues ** s
    weights.setflags(write=False)
    return weights


def norm_sobolev(field: SpectralField, s: float, basis: BasisTable) -> float:
    """||A^{s/2} u|| = (sum lambda_j^s y_j^2)^{1/2}; s=0, 1, 2 give ||u||, ||grad u||, ||Lap u||."""
    _check_aligned(field, basis)
    return math.sqrt(float(np.dot(sobolev_weights(basis, s), field.coeffs ** 2)))


def inner_product(f: SpectralField, g: SpectralField) -> float:
    """L2 inner product; the basis is orthonormal so the mass matrix is the identity."""
    if f.size != g.size:
        raise ShapeError(f"field sizes differ: {f.size} vs {g.size}")
    return float(np.dot(f.coeffs, g.coeffs))


def apply_power(field: SpectralField, basis: BasisTable, power: float) -> SpectralField:
    """A^power u with A = -Laplacian."""
    _check_aligned(field, basis)
    return SpectralField(field.coeffs * sobolev_weights(basis, power))


def truncate(field: SpectralField, keep: int) -> SpectralField:
    """Keep the lowest `keep` modes (eigenvalue order), zero the rest."""
    coeffs = np.array(field.coeffs)
    coeffs[max(keep, 0):] = 0.0
    return SpectralField(coeffs)
