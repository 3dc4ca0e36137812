"""Closed-form eigenbases on model domains and the collocation machinery.

Every field in the package is stored as its coefficient vector in the
L2-orthonormal eigenbasis of the operator ``A``.  Pointwise nonlinearities
go through a collocation grid on which the sampled eigenfunctions are
exactly orthonormal under the grid quadrature (discrete sine / cosine
orthogonality), so ``from_grid(to_grid(u)) == u`` up to round-off.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ConfigurationError, ShapeError, SingularOperatorError

__all__ = [
    "Geometry",
    "Boundary",
    "OperatorKind",
    "ModelDomain",
    "SpectralBasis",
    "Norms",
    "build_basis",
    "apply_power",
    "to_grid",
    "from_grid",
    "norms",
    "eval_modes",
]


class Geometry(str, enum.Enum):
    INTERVAL = "interval"
    RECTANGLE = "rectangle"


class Boundary(str, enum.Enum):
    DIRICHLET = "dirichlet"
    NEUMANN = "neumann"


class OperatorKind(str, enum.Enum):
    LAPLACIAN = "laplacian"
    HINGED = "hinged"  # A = Laplacian squared, u = Lap u = 0 on the boundary


@dataclass(frozen=True)
class ModelDomain:
    geometry: Geometry = Geometry.INTERVAL
    boundary: Boundary = Boundary.DIRICHLET
    operator: OperatorKind = OperatorKind.LAPLACIAN

    def __post_init__(self):
        try:
            object.__setattr__(self, "geometry", Geometry(self.geometry))
            object.__setattr__(self, "boundary", Boundary(self.boundary))
            object.__setattr__(self, "operator", OperatorKind(self.operator))
        except ValueError as exc:
            raise ConfigurationError(str(exc), field="domain") from None
        if self.operator is OperatorKind.HINGED and self.boundary is not Boundary.DIRICHLET:
            raise ConfigurationError(
                "hinged bi-Laplacian requires Dirichlet (hinged) boundary data",
                field="domain.boundary",
            )

    @property
    def dim(self) -> int:
        return 1 if self.geometry is Geometry.INTERVAL else 2

    @property
    def label(self) -> str:
        return f"{self.geometry.value}-{self.boundary.value}-{self.operator.value}"


def _axis_functions(boundary: Boundary, indices: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Orthonormal 1D eigenfunctions on (0, pi) sampled at ``x``; shape (len(x), len(indices))."""
    x = np.asarray(x, dtype=float)[..., None]
    if boundary is Boundary.DIRICHLET:
        return np.sqrt(2.0 / np.pi) * np.sin(indices * x)
    scale = np.where(indices == 0, np.sqrt(1.0 / np.pi), np.sqrt(2.0 / np.pi))
    return scale * np.cos(indices * x)


def _axis_grid(boundary: Boundary, n_nodes: int) -> tuple[np.ndarray, np.ndarray]:
    if boundary is Boundary.DIRICHLET:
        h = np.pi / (n_nodes + 1)
        nodes = h * np.arange(1, n_nodes + 1)
        weights = np.full(n_nodes, h)
    else:
        h = np.pi / (n_nodes - 1)
        nodes = h * np.arange(n_nodes)
        weights = np.full(n_nodes, h)
        weights[[0, -1]] *= 0.5
    return nodes, weights


@dataclass(frozen=True, eq=False)
class SpectralBasis:
    """Eigenpairs of ``A`` truncated to ``M`` modes plus the collocation grid.

    ``index`` holds the 1D axis indices of each mode, shape (M, dim).  On the
    interval the grid is ``2M+1`` nodes; on the rectangle each axis carries
    ``2n+1`` nodes where ``n`` is the largest axis index in use.
    """

    domain: ModelDomain
    M: int
    lam: np.ndarray
    mu: np.ndarray
    index: np.ndarray
    axes: tuple  # per-axis node arrays
    axis_weights: tuple
    _phi: tuple = field(repr=False)  # per-axis sampled eigenfunctions (G_a, n_a)

    @property
    def grid_shape(self) -> tuple:
        return tuple(len(a) for a in self.axes)

    @property
    def grid(self) -> np.ndarray:
        """Collocation nodes, shape (G,) on the interval and (Gx, Gy, 2) on the rectangle."""
        if self.domain.dim == 1:
            return self.axes[0]
        return np.stack(np.meshgrid(*self.axes, indexing="ij"), axis=-1)

    @property
    def weights(self) -> np.ndarray:
        if self.domain.dim == 1:
            return self.axis_weights[0]
        return np.multiply.outer(*self.axis_weights)

    @property
    def lambda_1(self) -> float:
        return float(self.lam[0])

    def unit(self, k: int) -> np.ndarray:
        """Coefficient vector of the k-th eigenfunction (1-based)."""
        if not 1 <= k <= self.M:
            raise ConfigurationError(f"mode {k} outside 1..{self.M}")
        u = np.zeros(self.M)
        u[k - 1] = 1.0
        return u


def build_basis(domain: ModelDomain, M: int) -> SpectralBasis:
    if int(M) != M or M < 1:
        raise ConfigurationError(f"mode count must be a positive integer, got {M}", field="M")
    M = int(M)
    first = 1 if domain.boundary is Boundary.DIRICHLET else 0

    if domain.geometry is Geometry.INTERVAL:
        index = np.arange(first, first + M)[:, None]
        mu = (index[:, 0] ** 2).astype(float)
    else:
        # enough candidates: the M smallest tensor eigenvalues use axis indices < first + M
        ax = np.arange(first, first + M)
        i, j = np.meshgrid(ax, ax, indexing="ij")
        i, j = i.ravel(), j.ravel()
        ev = i**2 + j**2
        order = np.lexsort((j, i, ev))[:M]
        index = np.stack([i[order], j[order]], axis=1)
        mu = (index**2).sum(axis=1).astype(float)

    lam = mu**2 if domain.operator is OperatorKind.HINGED else mu.copy()

    axes, weights, phis = [], [], []
    for a in range(domain.dim):
        n_max = int(index[:, a].max())
        if domain.dim == 1:
            n_nodes = 2 * M + 1
        else:
            n_nodes = 2 * (n_max + 1 - first) + 1
        nodes, w = _axis_grid(domain.boundary, n_nodes)
        axes.append(nodes)
        weights.append(w)
        phis.append(_axis_functions(domain.boundary, np.arange(first, n_max + 1), nodes))

    lam.setflags(write=False)
    mu.setflags(write=False)
    index.setflags(write=False)
    return SpectralBasis(domain, M, lam, mu, index, tuple(axes), tuple(weights), tuple(phis))


def _first(basis: SpectralBasis) -> int:
    return 1 if basis.domain.boundary is Boundary.DIRICHLET else 0


def _check_coeffs(basis: SpectralBasis, u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape[-1:] != (basis.M,):
        raise ShapeError(f"expected trailing dimension {basis.M}, got shape {u.shape}")
    return u


def apply_power(basis: SpectralBasis, sigma: float, u) -> np.ndarray:
    """``A**sigma u`` with the convention ``0**0 = 1``."""
    u = _check_coeffs(basis, u)
    return _power_diag(basis.lam, sigma) * u


def _power_diag(lam: np.ndarray, sigma: float) -> np.ndarray:
    if sigma == 0:
        return np.ones_like(lam)
    zero = lam == 0
    if sigma < 0 and zero.any():
        raise SingularOperatorError("negative power of A with a zero eigenvalue")
    out = np.zeros_like(lam)
    out[~zero] = lam[~zero] ** sigma
    return out


def to_grid(basis: SpectralBasis, u) -> np.ndarray:
    """Sample ``sum_k u_k e_k`` on the collocation grid (leading batch axes allowed)."""
    u = _check_coeffs(basis, u)
    first = _first(basis)
    if basis.domain.dim == 1:
        phi = basis._phi[0][:, basis.index[:, 0] - first]
        return u @ phi.T
    nx, ny = basis._phi[0].shape[1], basis._phi[1].shape[1]
    C = np.zeros(u.shape[:-1] + (nx, ny))
    C[..., basis.index[:, 0] - first, basis.index[:, 1] - first] = u
    return np.einsum("ia,...ab,jb->...ij", basis._phi[0], C, basis._phi[1], optimize=True)


def from_grid(basis: SpectralBasis, values) -> np.ndarray:
    """Quadrature projection of grid values onto the retained modes."""
    values = np.asarray(values, dtype=float)
    if values.shape[values.ndim - basis.domain.dim:] != basis.grid_shape:
        raise ShapeError(f"grid values of shape {values.shape} do not match grid {basis.grid_shape}")
    first = _first(basis)
    if basis.domain.dim == 1:
        phi = basis._phi[0][:, basis.index[:, 0] - first]
        return (values * basis.axis_weights[0]) @ phi
    wx, wy = basis.axis_weights
    C = np.einsum("ia,...ij,jb->...ab", basis._phi[0] * wx[:, None], values,
                  basis._phi[1] * wy[:, None], optimize=True)
    return C[..., basis.index[:, 0] - first, basis.index[:, 1] - first]


def eval_modes(basis: SpectralBasis, points) -> np.ndarray:
    """Matrix ``E[j, k] = e_k(x_j)`` for arbitrary points (shape (P,) or (P, 2))."""
    pts = np.asarray(points, dtype=float)
    if basis.domain.dim == 1:
        pts = pts.reshape(-1)
        return _axis_functions(basis.domain.boundary, basis.index[:, 0], pts)
    pts = pts.reshape(-1, 2)
    fx = _axis_functions(basis.domain.boundary, basis.index[:, 0], pts[:, 0])
    fy = _axis_functions(basis.domain.boundary, basis.index[:, 1], pts[:, 1])
    return fx * fy


class Norms(NamedTuple):
    l2: float
    h_half: float
    h_sigma: float | None


def norms(basis: SpectralBasis, u, sigma: float | None = None) -> Norms:
    """L2, ``|A^{1/2} u|`` and optionally ``|A^sigma u|``."""
    u = _check_coeffs(basis, u)
    l2 = float(np.sqrt(np.sum(u**2)))
    h_half = float(np.sqrt(np.sum(basis.lam * u**2)))
    h_sigma = None
    if sigma is not None:
        h_sigma = float(np.sqrt(np.sum(_power_diag(basis.lam, 2 * sigma) * u**2)))
    return Norms(l2, h_half, h_sigma)
