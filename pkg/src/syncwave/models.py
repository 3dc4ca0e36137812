"""Coupling operators, nonlinear forces and assembly of the coupled system.

The assembled system is

    u_i'' + nu_i A u_i + gamma_i u_i' + alpha (G K U')_i + kappa (G K U)_i + B_i(u_i) = f_i

where ``G`` is the graph Laplacian of the pair / chain topology (the matrix
``[[1, -1], [-1, 1]]`` for a pair, the tridiagonal path Laplacian for a
chain) acting across subsystems and ``K`` acts on each field.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from .errors import ConfigurationError, DegenerateNodesError, NumericalOverflowError, ShapeError
from .spectral import SpectralBasis, _power_diag, eval_modes, from_grid, to_grid

__all__ = [
    "Identity",
    "FractionalPower",
    "ModalProjector",
    "NodalInterpolation",
    "CouplingOperator",
    "ZeroForce",
    "SineGordon",
    "LocalFunction",
    "Berger",
    "kirchhoff",
    "Nonlinearity",
    "SubsystemSpec",
    "Topology",
    "CoupledSystem",
    "assemble",
    "apply_coupling",
    "coupling_matrix",
    "coupling_diagonal",
    "build_lagrange",
    "eval_force",
    "potential",
    "graph_laplacian",
    "rhs",
    "single_equation",
]


# -- coupling operators ------------------------------------------------------


@dataclass(frozen=True)
class Identity:
    symmetric = True


@dataclass(frozen=True)
class FractionalPower:
    sigma: float
    symmetric = True

    def __post_init__(self):
        if not 0.0 <= self.sigma <= 0.5:
            raise ConfigurationError(f"sigma must lie in [0, 1/2], got {self.sigma}", field="sigma")


@dataclass(frozen=True)
class ModalProjector:
    N: int
    symmetric = True

    def __post_init__(self):
        if self.N < 0:
            raise ConfigurationError(f"projector rank must be >= 0, got {self.N}", field="N")


@dataclass(frozen=True, eq=False)
class NodalInterpolation:
    """Lagrange interpolation ``K v = sum_j v(x_j) psi_j``.

    ``psi`` has shape (M, N): column j is the coefficient vector of ``psi_j``
    (nonzero only on the first N modes).  ``evals`` is ``E[j, k] = e_k(x_j)``.
    """

    nodes: np.ndarray
    psi: np.ndarray
    evals: np.ndarray
    symmetric = False

    @property
    def N(self) -> int:
        return self.psi.shape[1]


CouplingOperator = Union[Identity, FractionalPower, ModalProjector, NodalInterpolation]


def build_lagrange(basis: SpectralBasis, nodes, cond_limit: float = 1e12) -> NodalInterpolation:
    nodes = np.asarray(nodes, dtype=float)
    pts = nodes.reshape(-1) if basis.domain.dim == 1 else nodes.reshape(-1, 2)
    N = len(pts)
    if N == 0 or N > basis.M:
        raise ConfigurationError(f"need 1 <= number of nodes <= M={basis.M}, got {N}", field="nodes")
    coords = pts.reshape(N, -1)
    if np.any(coords <= 0) or np.any(coords >= np.pi):
        raise ConfigurationError("nodes must be interior points of the domain", field="nodes")
    evals = eval_modes(basis, pts)
    E = evals[:, :N]
    if np.linalg.cond(E) > cond_limit:
        raise DegenerateNodesError(f"nodal interpolation matrix is singular for nodes {pts.tolist()}")
    psi = np.zeros((basis.M, N))
    psi[:N] = np.linalg.solve(E, np.eye(N))
    return NodalInterpolation(pts, psi, evals)


def coupling_diagonal(K: CouplingOperator, basis: SpectralBasis) -> np.ndarray | None:
    """Eigenvalues of ``K`` on ``e_k`` when ``K`` is diagonal in the eigenbasis, else None."""
    if isinstance(K, Identity):
        return np.ones(basis.M)
    if isinstance(K, FractionalPower):
        return _power_diag(basis.lam, K.sigma)
    if isinstance(K, ModalProjector):
        return (np.arange(1, basis.M + 1) <= K.N).astype(float)
    return None


def coupling_matrix(K: CouplingOperator, basis: SpectralBasis) -> np.ndarray:
    """Dense (M, M) matrix of ``K`` in the eigenbasis."""
    d = coupling_diagonal(K, basis)
    if d is not None:
        return np.diag(d)
    return K.psi @ K.evals


def apply_coupling(K: CouplingOperator, basis: SpectralBasis, u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    d = coupling_diagonal(K, basis)
    if d is not None:
        return u * d
    # (K u)_k = sum_j u(x_j) psi_{kj}
    return (u @ K.evals.T) @ K.psi.T


# -- nonlinear forces --------------------------------------------------------


@dataclass(frozen=True)
class ZeroForce:
    globally_lipschitz = True


@dataclass(frozen=True)
class SineGordon:
    """``B(u) = lambda_s sin u`` with potential ``lambda_s * int (1 - cos u)``."""

    lambda_s: float
    globally_lipschitz = True


@dataclass(frozen=True, eq=False)
class LocalFunction:
    """Pointwise force ``phi(u)`` with primitive ``prim`` normalised so ``prim(0) = 0``."""

    phi: Callable[[np.ndarray], np.ndarray]
    prim: Callable[[np.ndarray], np.ndarray]
    globally_lipschitz: bool = False
    label: str = "local"


@dataclass(frozen=True)
class Berger:
    """``B(u) = (kappa_b |grad u|^2 - Gamma) (-Lap) u``."""

    kappa_b: float
    Gamma: float
    globally_lipschitz = False

    def __post_init__(self):
        if self.kappa_b < 0:
            raise ConfigurationError("Berger stiffness must be nonnegative", field="kappa_b")


def kirchhoff(a: float, b: float) -> LocalFunction:
    """Cubic Kirchhoff force ``phi(s) = a s^3 + b s``."""
    if a < 0:
        raise ConfigurationError("cubic coefficient must be nonnegative", field="a")
    return LocalFunction(
        phi=lambda s: a * s**3 + b * s,
        prim=lambda s: 0.25 * a * s**4 + 0.5 * b * s**2,
        globally_lipschitz=(a == 0),
        label=f"kirchhoff(a={a!r}, b={b!r})",
    )


Nonlinearity = Union[ZeroForce, SineGordon, LocalFunction, Berger]


def _grid_values(basis, u):
    g = to_grid(basis, u)
    if not np.all(np.isfinite(g)):
        raise NumericalOverflowError("non-finite values on the collocation grid")
    return g


def eval_force(nl: Nonlinearity, basis: SpectralBasis, u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if isinstance(nl, ZeroForce):
        return np.zeros_like(u)
    if isinstance(nl, SineGordon):
        return from_grid(basis, nl.lambda_s * np.sin(_grid_values(basis, u)))
    if isinstance(nl, LocalFunction):
        out = from_grid(basis, nl.phi(_grid_values(basis, u)))
        if not np.all(np.isfinite(out)):
            raise NumericalOverflowError("non-finite local force")
        return out
    if isinstance(nl, Berger):
        S = np.sum(basis.mu * u**2, axis=-1, keepdims=True)
        return (nl.kappa_b * S - nl.Gamma) * basis.mu * u
    raise ConfigurationError(f"unknown nonlinearity {nl!r}")


def _integrate(basis, values) -> np.ndarray:
    axes = tuple(range(-basis.domain.dim, 0))
    return np.sum(values * basis.weights, axis=axes)


def potential(nl: Nonlinearity, basis: SpectralBasis, u) -> float:
    u = np.asarray(u, dtype=float)
    if isinstance(nl, ZeroForce):
        return 0.0
    if isinstance(nl, SineGordon):
        return float(nl.lambda_s * _integrate(basis, 1.0 - np.cos(to_grid(basis, u))))
    if isinstance(nl, LocalFunction):
        return float(_integrate(basis, nl.prim(to_grid(basis, u))))
    if isinstance(nl, Berger):
        S = float(np.sum(basis.mu * u**2))
        return 0.25 * nl.kappa_b * S**2 - 0.5 * nl.Gamma * S
    raise ConfigurationError(f"unknown nonlinearity {nl!r}")


# -- system ------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SubsystemSpec:
    nu: float
    gamma: float = 0.0
    nonlinearity: Nonlinearity = field(default_factory=ZeroForce)
    forcing: np.ndarray | None = None

    def __post_init__(self):
        if not self.nu > 0:
            raise ConfigurationError(f"nu must be positive, got {self.nu}", field="nu")
        if self.gamma < 0:
            raise ConfigurationError(f"gamma must be nonnegative, got {self.gamma}", field="gamma")


class Topology(str, enum.Enum):
    PAIR = "pair"
    CHAIN = "chain"


def graph_laplacian(n: int) -> np.ndarray:
    """Path-graph Laplacian; for n=2 this is ``[[1, -1], [-1, 1]]``."""
    G = np.zeros((n, n))
    for j in range(n - 1):
        G[j, j] += 1
        G[j + 1, j + 1] += 1
        G[j, j + 1] -= 1
        G[j + 1, j] -= 1
    return G


@dataclass(frozen=True, eq=False)
class CoupledSystem:
    basis: SpectralBasis
    subsystems: tuple
    topology: Topology
    alpha: float
    kappa: float
    K: CouplingOperator
    sine_link: float = 0.0
    graph: np.ndarray = field(repr=False, default=None)
    forcing: np.ndarray = field(repr=False, default=None)  # (n, M)
    k_diag: np.ndarray | None = field(repr=False, default=None)

    @property
    def n(self) -> int:
        return len(self.subsystems)

    @property
    def nu(self) -> np.ndarray:
        return np.array([s.nu for s in self.subsystems])

    @property
    def gamma(self) -> np.ndarray:
        return np.array([s.gamma for s in self.subsystems])

    @property
    def edges(self) -> list[tuple[int, int]]:
        return [(j, j + 1) for j in range(self.n - 1)]

    @property
    def is_linear(self) -> bool:
        return self.sine_link == 0 and all(isinstance(s.nonlinearity, ZeroForce) for s in self.subsystems)

    @property
    def symmetric_coupling(self) -> bool:
        return self.K.symmetric

    @property
    def within_lagrange_hypotheses(self) -> bool:
        """False for nodal coupling with a force that is not globally Lipschitz."""
        if self.K.symmetric:
            return True
        return all(s.nonlinearity.globally_lipschitz for s in self.subsystems) and self.sine_link == 0

    def couple(self, U: np.ndarray) -> np.ndarray:
        """``(G (x) K) U`` for a multi-field of shape (n, M)."""
        KU = U * self.k_diag if self.k_diag is not None else apply_coupling(self.K, self.basis, U)
        return self.graph @ KU

    def nonlinear_forces(self, U: np.ndarray) -> np.ndarray:
        """Stacked ``B_i(u_i)`` plus the sine link; shape (n, M)."""
        out = np.empty_like(U)
        for i, s in enumerate(self.subsystems):
            out[i] = eval_force(s.nonlinearity, self.basis, U[i])
        if self.sine_link:
            d = to_grid(self.basis, U[0] - U[1])
            link = from_grid(self.basis, self.sine_link * np.sin(d))
            out[0] += link
            out[1] -= link
        return out


def assemble(basis: SpectralBasis, subsystems: Sequence[SubsystemSpec], topology="pair",
             alpha: float = 0.0, kappa: float = 0.0, K: CouplingOperator | None = None,
             sine_link: float = 0.0) -> CoupledSystem:
    """Validate and precompute a coupled system.

    ``sine_link`` adds ``+lambda sin(u - v)`` to the first and ``lambda sin(v - u)``
    to the second member of a pair (the anti-phase sine-Gordon system).
    """
    topology = Topology(topology)
    subsystems = tuple(subsystems)
    n = len(subsystems)
    if n < 2:
        raise ConfigurationError("need at least two subsystems", field="subsystems")
    if topology is Topology.PAIR and n != 2:
        raise ConfigurationError(f"pair topology needs exactly 2 subsystems, got {n}", field="topology")
    if alpha < 0 or kappa < 0:
        raise ConfigurationError("coupling intensities must be nonnegative", field="coupling")
    if sine_link and topology is not Topology.PAIR:
        raise ConfigurationError("sine link is defined for pairs only", field="sine_link")
    K = Identity() if K is None else K
    if isinstance(K, ModalProjector) and K.N > basis.M:
        raise ConfigurationError(f"projector rank {K.N} exceeds M={basis.M}", field="K.N")
    if isinstance(K, NodalInterpolation) and K.psi.shape[0] != basis.M:
        raise ConfigurationError("nodal operator was built for a different basis", field="K")
    forcing = np.zeros((n, basis.M))
    for i, s in enumerate(subsystems):
        if s.forcing is not None:
            f = np.asarray(s.forcing, dtype=float)
            if f.shape != (basis.M,):
                raise ConfigurationError(
                    f"forcing of subsystem {i} has shape {f.shape}, basis has M={basis.M}",
                    field=f"subsystems[{i}].forcing",
                )
            forcing[i] = f
        if isinstance(s.nonlinearity, Berger) and basis.domain.boundary.value != "dirichlet":
            raise ConfigurationError("Berger force needs a Dirichlet-type basis", field=f"subsystems[{i}]")
    forcing.setflags(write=False)
    return CoupledSystem(basis, subsystems, topology, float(alpha), float(kappa), K, float(sine_link),
                         graph_laplacian(n), forcing, coupling_diagonal(K, basis))


def _check_state(system: CoupledSystem, U, V):
    shape = (system.n, system.basis.M)
    if np.shape(U) != shape or np.shape(V) != shape:
        raise ShapeError(f"state must have shape {shape}, got {np.shape(U)} and {np.shape(V)}")


def rhs(system: CoupledSystem, state) -> tuple[np.ndarray, np.ndarray]:
    """Time derivative ``(U', V')`` of a state with positions U and velocities V."""
    U, V = np.asarray(state.positions, float), np.asarray(state.velocities, float)
    _check_state(system, U, V)
    lam = system.basis.lam
    dV = (system.forcing
          - system.nu[:, None] * lam * U
          - system.gamma[:, None] * V
          - system.alpha * system.couple(V)
          - system.kappa * system.couple(U)
          - system.nonlinear_forces(U))
    return V.copy(), dV


def single_equation(basis: SpectralBasis, spec: SubsystemSpec) -> CoupledSystem:
    """One uncoupled equation packaged as a system, for integrating reduced equations.

    Bypasses the two-member minimum of :func:`assemble`; no coupling terms exist.
    """
    f = np.zeros(basis.M) if spec.forcing is None else np.asarray(spec.forcing, dtype=float)
    if f.shape != (basis.M,):
        raise ConfigurationError(f"forcing has shape {f.shape}, basis has M={basis.M}", field="forcing")
    return CoupledSystem(basis, (spec,), Topology.CHAIN, 0.0, 0.0, Identity(), 0.0,
                         np.zeros((1, 1)), f[None].copy(), np.ones(basis.M))
