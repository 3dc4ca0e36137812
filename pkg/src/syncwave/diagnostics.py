"""Quantities the synchronization estimates are stated in.

Synchronization errors, the spectral threshold ``s_kappa``, completeness
defects and approximation errors of coupling operators, exponential-rate
fits, the Lyapunov functional used for uniform dissipativity, and the
``w = (u - v)/2``, ``z = (u + v)/2`` decomposition.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
import scipy.linalg

from .errors import (
    ConfigurationError,
    InsufficientDataError,
    SingularOperatorError,
    UnsupportedVariantError,
)
from .integrator import SystemState, energy, interaction_energy
from .models import (
    CoupledSystem,
    CouplingOperator,
    NodalInterpolation,
    coupling_diagonal,
    coupling_matrix,
)
from .spectral import Boundary, SpectralBasis, eval_modes

__all__ = [
    "SyncMetrics",
    "RateFit",
    "ThresholdReport",
    "Modes",
    "Nodes",
    "sync_error",
    "s_kappa",
    "completeness_defect",
    "approximation_error",
    "fit_rate",
    "lyapunov_value",
    "wz_transform",
    "stationary_profile",
]


@dataclass(frozen=True)
class SyncMetrics:
    edge_vel_sq: np.ndarray
    edge_pos_half_sq: np.ndarray
    edge_pos_l2_sq: np.ndarray

    @property
    def vel_sq(self) -> float:
        return float(np.sum(self.edge_vel_sq))

    @property
    def pos_half_sq(self) -> float:
        return float(np.sum(self.edge_pos_half_sq))

    @property
    def pos_l2_sq(self) -> float:
        return float(np.sum(self.edge_pos_l2_sq))

    @property
    def total(self) -> float:
        """``|u' - v'|^2 + |A^{1/2}(u - v)|^2`` summed over edges."""
        return self.vel_sq + self.pos_half_sq


def sync_error(system: CoupledSystem, state: SystemState) -> SyncMetrics:
    U, V = state.positions, state.velocities
    lam = system.basis.lam
    dU = np.array([U[i] - U[j] for i, j in system.edges])
    dV = np.array([V[i] - V[j] for i, j in system.edges])
    return SyncMetrics(
        edge_vel_sq=np.sum(dV**2, axis=1),
        edge_pos_half_sq=np.sum(lam * dU**2, axis=1),
        edge_pos_l2_sq=np.sum(dU**2, axis=1),
    )


# -- spectral thresholds -------------------------------------------------------


@dataclass(frozen=True)
class ThresholdReport:
    s_kappa: float
    kappa: float
    s_star: float | None = None
    M_trunc: int | None = None

    @property
    def meets_threshold(self) -> bool | None:
        return None if self.s_star is None else self.s_kappa >= self.s_star


def _trunc(basis: SpectralBasis, M_trunc: int | None) -> int:
    m = basis.M if M_trunc is None else int(M_trunc)
    if not 1 <= m <= basis.M:
        raise ConfigurationError(f"M_trunc must lie in 1..{basis.M}, got {M_trunc}", field="M_trunc")
    return m


def s_kappa(nu: float, basis: SpectralBasis, K: CouplingOperator, kappa: float,
            M_trunc: int | None = None, dense: bool = False) -> float:
    """Smallest value of ``nu (Aw, w) + kappa (Kw, w)`` over unit ``w`` in the truncation.

    ``dense=True`` forces the general symmetric-eigenvalue path even when
    ``K`` is diagonal.
    """
    if isinstance(K, NodalInterpolation):
        raise UnsupportedVariantError("s_kappa is defined for symmetric couplings only")
    m = _trunc(basis, M_trunc)
    lam = basis.lam[:m]
    if not dense:
        return float(np.min(nu * lam + kappa * coupling_diagonal(K, basis)[:m]))
    Kmat = coupling_matrix(K, basis)[:m, :m]
    H = nu * np.diag(lam) + kappa * Kmat
    return float(scipy.linalg.eigh(H, eigvals_only=True, subset_by_index=[0, 0])[0])


@dataclass(frozen=True)
class Modes:
    N: int


@dataclass(frozen=True)
class Nodes:
    points: tuple


Functionals = Union[Modes, Nodes, Sequence[float]]


def _require_positive_spectrum(basis: SpectralBasis):
    if basis.domain.boundary is not Boundary.DIRICHLET or basis.lam[0] <= 0:
        raise SingularOperatorError("A^{-1/2} is undefined: the basis has a zero eigenvalue")


def _constraint_matrix(basis: SpectralBasis, functionals, m: int) -> np.ndarray:
    if isinstance(functionals, Modes):
        return np.eye(m)[: min(functionals.N, m)]
    pts = functionals.points if isinstance(functionals, Nodes) else functionals
    if len(pts) == 0:
        return np.zeros((0, m))
    return eval_modes(basis, pts)[:, :m]


def completeness_defect(basis: SpectralBasis, functionals: Functionals, M_trunc: int | None = None) -> float:
    """Largest ``|w|`` over ``|A^{1/2} w| <= 1`` with all functionals vanishing.

    With ``w = A^{-1/2} y`` this is the largest singular value of
    ``A^{-1/2}`` restricted to the null space of ``C A^{-1/2}``.
    """
    _require_positive_spectrum(basis)
    m = _trunc(basis, M_trunc)
    C = _constraint_matrix(basis, functionals, m)
    n_constraints = C.shape[0]
    if n_constraints >= m:
        warnings.warn(f"{n_constraints} functionals on a {m}-dimensional truncation: over-constrained",
                      stacklevel=2)
    inv_sqrt = 1.0 / np.sqrt(basis.lam[:m])
    if n_constraints == 0:
        Z = np.eye(m)
    else:
        Z = scipy.linalg.null_space(C * inv_sqrt)
    if Z.shape[1] == 0:
        return 0.0
    B = inv_sqrt[:, None] * Z
    top = scipy.linalg.eigh(B.T @ B, eigvals_only=True, subset_by_index=[Z.shape[1] - 1, Z.shape[1] - 1])
    return float(np.sqrt(max(top[0], 0.0)))


def approximation_error(basis: SpectralBasis, L: CouplingOperator, K: CouplingOperator,
                        M_trunc: int | None = None) -> float:
    """``sup |Lu - Ku|`` over ``|A^{1/2} u| <= 1`` on the truncation."""
    _require_positive_spectrum(basis)
    m = _trunc(basis, M_trunc)
    D = (coupling_matrix(L, basis) - coupling_matrix(K, basis))[:, :m] / np.sqrt(basis.lam[:m])
    return float(np.linalg.norm(D, 2))


# -- rates ---------------------------------------------------------------------


@dataclass(frozen=True)
class RateFit:
    omega: float
    r_squared: float
    window: tuple
    n_samples: int


def fit_rate(times, values, window: tuple | None = None) -> RateFit:
    """Least-squares fit of ``log(values)`` against time; ``omega`` is minus the slope.

    The default window is the last half of the time range.  Only strictly
    positive samples enter the fit.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    if window is None:
        window = (t[0] + 0.5 * (t[-1] - t[0]), t[-1])
    t0, t1 = window
    sel = (t >= t0) & (t <= t1) & (y > 0) & np.isfinite(y)
    if np.count_nonzero(sel) < 5:
        raise InsufficientDataError(f"only {np.count_nonzero(sel)} positive samples in window {window}")
    x, ly = t[sel], np.log(y[sel])
    slope, intercept = np.polyfit(x, ly, 1)
    resid = ly - (slope * x + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    ss_res = float(np.sum(resid**2))
    # a constant series is fitted exactly by a flat line
    r2 = 1.0 if ss_tot <= 1e-24 * len(x) else max(0.0, 1.0 - ss_res / ss_tot)
    return RateFit(omega=float(-slope), r_squared=float(min(r2, 1.0)), window=(float(t0), float(t1)),
                   n_samples=int(np.count_nonzero(sel)))


# -- Lyapunov functional -------------------------------------------------------


def lyapunov_value(system: CoupledSystem, state: SystemState, eta: float) -> float:
    """``V = E + eta (U, U') + mu (KU, U)`` with ``mu = (kappa + eta alpha) / 2``.

    Here ``E`` is the energy without the interaction term, so at ``eta = 0``
    ``V`` equals the full energy of the coupled system.
    """
    if not system.symmetric_coupling:
        raise UnsupportedVariantError("Lyapunov functional needs a symmetric coupling operator")
    if eta < 0:
        raise ConfigurationError("eta must be nonnegative", field="eta")
    U, V = state.positions, state.velocities
    E = energy(system, state) - interaction_energy(system, U)
    mu = 0.5 * (system.kappa + eta * system.alpha)
    return E + eta * float(np.sum(U * V)) + mu * float(np.sum(system.couple(U) * U))


# -- anti-phase decomposition ------------------------------------------------------


def wz_transform(state: SystemState):
    """Return ``((w, w'), (z, z'))`` with ``w = (u - v)/2`` and ``z = (u + v)/2``."""
    U, V = state.positions, state.velocities
    if U.shape[0] != 2:
        raise ConfigurationError(f"w/z variables need exactly 2 subsystems, got {U.shape[0]}")
    w = (0.5 * (U[0] - U[1]), 0.5 * (V[0] - V[1]))
    z = (0.5 * (U[0] + U[1]), 0.5 * (V[0] + V[1]))
    return w, z


def stationary_profile(basis: SpectralBasis, h) -> np.ndarray:
    """Solve ``-Lap z = h`` with Dirichlet data."""
    h = np.asarray(h, dtype=float)
    if np.any(basis.mu == 0):
        raise SingularOperatorError("the Laplacian has a zero eigenvalue on this basis")
    return h / basis.mu
