"""Time stepping and energy bookkeeping.

Two schemes are provided.  ``implicit_midpoint`` solves the midpoint rule by
fixed-point iteration on the nonlinear forces while the stiff linear part
(``nu A``, damping and both couplings) is inverted exactly, blockwise per mode
when the coupling is diagonal in the eigenbasis and as one dense system
otherwise.  ``exponential_split`` is a Strang splitting: exact affine flow of
the linear part for half a step, a nonlinear kick, another half step.

Both schemes accumulate the dissipation integral consistently with the
scheme, so that for linear systems ``E(t) + D(t) = E(0)`` holds to round-off.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import ConfigurationError, ShapeError, StepFailure
from .models import CoupledSystem, _integrate, coupling_matrix, potential
from .spectral import to_grid

__all__ = [
    "SystemState",
    "Scheme",
    "StepperConfig",
    "TrajectoryRecord",
    "Stepper",
    "step",
    "integrate",
    "energy",
    "interaction_energy",
    "energy_residual",
]


@dataclass(frozen=True, eq=False)
class SystemState:
    t: float
    positions: np.ndarray  # (n, M)
    velocities: np.ndarray  # (n, M)

    def __post_init__(self):
        U = np.array(self.positions, dtype=float)
        V = np.array(self.velocities, dtype=float)
        if U.ndim != 2 or U.shape != V.shape:
            raise ShapeError(f"positions {U.shape} and velocities {V.shape} must be equal 2D shapes")
        if not (np.all(np.isfinite(U)) and np.all(np.isfinite(V))):
            raise ShapeError("state contains non-finite coefficients")
        U.setflags(write=False)
        V.setflags(write=False)
        object.__setattr__(self, "positions", U)
        object.__setattr__(self, "velocities", V)

    @classmethod
    def zeros(cls, n: int, M: int, t: float = 0.0) -> "SystemState":
        return cls(t, np.zeros((n, M)), np.zeros((n, M)))


class Scheme(str, enum.Enum):
    IMPLICIT_MIDPOINT = "implicit_midpoint"
    EXPONENTIAL_SPLIT = "exponential_split"


@dataclass(frozen=True)
class StepperConfig:
    dt: float
    scheme: Scheme = Scheme.IMPLICIT_MIDPOINT
    solver_tol: float = 1e-12
    max_iterations: int = 100

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if not self.dt > 0:
            raise ConfigurationError(f"dt must be positive, got {self.dt}", field="dt")
        if not self.solver_tol > 0:
            raise ConfigurationError("solver_tol must be positive", field="solver_tol")
        if self.max_iterations < 1:
            raise ConfigurationError("max_iterations must be >= 1", field="max_iterations")


# -- energy ------------------------------------------------------------------


def interaction_energy(system: CoupledSystem, U) -> float:
    """``kappa/2 * sum_edges (K(u_j - u_j'), u_j - u_j')``.

    For a pair or chain this equals ``kappa/2 (G K U, U)``.  With nodal
    coupling the sign of this term is not guaranteed.
    """
    U = np.asarray(U, dtype=float)
    return 0.5 * system.kappa * float(np.sum(system.couple(U) * U))


def _link_potential(system: CoupledSystem, U) -> float:
    if not system.sine_link:
        return 0.0
    d = to_grid(system.basis, U[0] - U[1])
    return float(system.sine_link * _integrate(system.basis, 1.0 - np.cos(d)))


def _subsystem_energy(system: CoupledSystem, U, V) -> float:
    lam = system.basis.lam
    total = 0.0
    for i, s in enumerate(system.subsystems):
        total += 0.5 * float(V[i] @ V[i]) + 0.5 * s.nu * float(np.sum(lam * U[i] ** 2))
        total += potential(s.nonlinearity, system.basis, U[i]) - float(system.forcing[i] @ U[i])
    return total + _link_potential(system, U)


def energy(system: CoupledSystem, state: SystemState) -> float:
    U, V = state.positions, state.velocities
    return _subsystem_energy(system, U, V) + interaction_energy(system, U)


def _dissipation_rate(system: CoupledSystem, V) -> float:
    """``(D0 V, V) + alpha (G K V, V)``."""
    rate = float(np.sum(system.gamma[:, None] * V * V))
    if system.alpha:
        rate += system.alpha * float(np.sum(system.couple(V) * V))
    return rate


# -- linear operator -----------------------------------------------------------


def _mode_blocks(system: CoupledSystem) -> np.ndarray:
    """Per-mode linear generators, shape (M, 2n, 2n), for diagonal couplings."""
    n, M = system.n, system.basis.M
    lam, kd, G = system.basis.lam, system.k_diag, system.graph
    L = np.zeros((M, 2 * n, 2 * n))
    L[:, :n, n:] = np.eye(n)
    L[:, n:, :n] = -(np.diag(system.nu)[None] * lam[:, None, None] + system.kappa * kd[:, None, None] * G[None])
    L[:, n:, n:] = -(np.diag(system.gamma)[None] + system.alpha * kd[:, None, None] * G[None])
    return L


def _dense_generator(system: CoupledSystem) -> np.ndarray:
    """Full generator on the flattened state ``[U.ravel(), V.ravel()]``."""
    n, M = system.n, system.basis.M
    Kmat = coupling_matrix(system.K, system.basis)
    stiff = np.kron(np.diag(system.nu), np.diag(system.basis.lam)) + system.kappa * np.kron(system.graph, Kmat)
    damp = np.kron(np.diag(system.gamma), np.eye(M)) + system.alpha * np.kron(system.graph, Kmat)
    L = np.zeros((2 * n * M, 2 * n * M))
    L[: n * M, n * M:] = np.eye(n * M)
    L[n * M:, : n * M] = -stiff
    L[n * M:, n * M:] = -damp
    return L


class Stepper:
    """Precomputed one-step map for a fixed system and configuration."""

    def __init__(self, system: CoupledSystem, cfg: StepperConfig):
        self.system = system
        self.cfg = cfg
        n, M = system.n, system.basis.M
        self._blockwise = system.k_diag is not None
        dt = cfg.dt
        if cfg.scheme is Scheme.IMPLICIT_MIDPOINT:
            if self._blockwise:
                L = _mode_blocks(system)
                self._P = np.linalg.inv(np.eye(2 * n)[None] - 0.5 * dt * L)
            else:
                L = _dense_generator(system)
                self._P = np.linalg.inv(np.eye(2 * n * M) - 0.5 * dt * L)
        else:
            if not self._blockwise:
                raise ConfigurationError(
                    "exponential splitting needs a coupling diagonal in the eigenbasis",
                    field="integration.scheme",
                )
            self._setup_exponential()

    # state <-> block layout helpers
    def _to_blocks(self, U, V):
        return np.concatenate([U, V], axis=0).T  # (M, 2n)

    def _from_blocks(self, Z):
        n = self.system.n
        return Z[:, :n].T, Z[:, n:].T

    def _apply_P(self, U, V):
        if self._blockwise:
            Z = np.einsum("kij,kj->ki", self._P, self._to_blocks(U, V))
            return self._from_blocks(Z)
        n = self.system.n
        z = self._P @ np.concatenate([U.ravel(), V.ravel()])
        half = z.size // 2
        return z[:half].reshape(n, -1), z[half:].reshape(n, -1)

    def _setup_exponential(self):
        system, dt = self.system, self.cfg.dt
        n, M = system.n, system.basis.M
        L = _mode_blocks(system)
        m = 2 * n + 1
        # augmented generator carries the constant forcing as an extra unit state
        Laug = np.zeros((M, m, m))
        Laug[:, : 2 * n, : 2 * n] = L
        Laug[:, n: 2 * n, -1] = system.forcing.T
        Q = np.zeros((M, m, m))
        Q[:, n: 2 * n, n: 2 * n] = -L[:, n:, n:]  # damping matrix (symmetric)
        h = 0.5 * dt
        self._E = np.empty((M, m, m))
        self._W = np.empty((M, m, m))
        for k in range(M):
            # Van Loan: expm([[-L^T, Q], [0, L]] h) gives int_0^h e^{L^T s} Q e^{L s} ds
            big = np.zeros((2 * m, 2 * m))
            big[:m, :m] = -Laug[k].T
            big[:m, m:] = Q[k]
            big[m:, m:] = Laug[k]
            F = scipy.linalg.expm(big * h)
            E = F[m:, m:]
            self._E[k] = E
            W = E.T @ F[:m, m:]
            self._W[k] = 0.5 * (W + W.T)

    def _half_flow(self, U, V):
        Z = np.concatenate([self._to_blocks(U, V), np.ones((self.system.basis.M, 1))], axis=1)
        diss = float(np.einsum("ki,kij,kj->", Z, self._W, Z))
        Z = np.einsum("kij,kj->ki", self._E, Z)[:, :-1]
        U, V = self._from_blocks(Z)
        return U, V, diss

    def advance(self, U, V, t: float = 0.0):
        """One step from (U, V); returns (U_new, V_new, dissipation increment)."""
        system, dt = self.system, self.cfg.dt
        if self.cfg.scheme is Scheme.EXPONENTIAL_SPLIT:
            U, V, d1 = self._half_flow(U, V)
            if not system.is_linear:
                V = V - dt * system.nonlinear_forces(U)
            U, V, d2 = self._half_flow(U, V)
            return U, V, d1 + d2

        # implicit midpoint:  Z1 = P (2 Z0 + dt N(Zmid)) - Z0,  N acts on velocities only
        f = system.forcing

        def update(Umid):
            kick = f if system.is_linear else f - system.nonlinear_forces(Umid)
            U1, V1 = self._apply_P(2.0 * U, 2.0 * V + dt * kick)
            return U1 - U, V1 - V

        U1, V1 = update(U)
        if not system.is_linear:
            scale = max(1.0, math.sqrt(float(np.sum(U * U) + np.sum(V * V))))
            for _ in range(self.cfg.max_iterations):
                U2, V2 = update(0.5 * (U + U1))
                diff = math.sqrt(float(np.sum((U2 - U1) ** 2) + np.sum((V2 - V1) ** 2)))
                U1, V1 = U2, V2
                if not math.isfinite(diff):
                    break
                if diff <= self.cfg.solver_tol * scale:
                    break
            else:
                raise StepFailure(
                    f"fixed-point iteration did not converge in {self.cfg.max_iterations} iterations "
                    f"(last update {diff:.3e}) at t={t}",
                    time=t,
                )
            if not math.isfinite(diff):
                raise StepFailure(f"non-finite iterate at t={t}", time=t)
        Vmid = 0.5 * (V + V1)
        return U1, V1, dt * _dissipation_rate(system, Vmid)


def step(system: CoupledSystem, state: SystemState, cfg: StepperConfig,
         stepper: Stepper | None = None) -> SystemState:
    _check(system, state)
    stepper = stepper or Stepper(system, cfg)
    U, V, _ = stepper.advance(state.positions, state.velocities, state.t)
    return SystemState(state.t + cfg.dt, U, V)


def _check(system, state):
    if state.positions.shape != (system.n, system.basis.M):
        raise ShapeError(
            f"state shape {state.positions.shape} does not match system ({system.n}, {system.basis.M})"
        )


# -- trajectories --------------------------------------------------------------


@dataclass(eq=False)
class TrajectoryRecord:
    times: np.ndarray
    energy: np.ndarray
    dissipation: np.ndarray
    sync_vel_sq: np.ndarray
    sync_pos_half_sq: np.ndarray
    sync_pos_l2_sq: np.ndarray
    lyapunov: np.ndarray
    l2_norms: np.ndarray  # (S, n)
    positions: np.ndarray | None = None  # (S, n, M)
    velocities: np.ndarray | None = None
    eta: float = 0.0
    interaction_sign_guaranteed: bool = True
    failure: str | None = None
    failure_time: float | None = None
    extras: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.times)

    @property
    def sync_total(self) -> np.ndarray:
        return self.sync_vel_sq + self.sync_pos_half_sq

    def state(self, i: int) -> SystemState:
        return SystemState(float(self.times[i]), self.positions[i], self.velocities[i])

    @property
    def final_state(self) -> SystemState:
        return self.state(-1)


def integrate(system: CoupledSystem, state0: SystemState, T: float, cfg: StepperConfig,
              sample_every: int = 1, eta: float = 0.05, keep_states: bool = True,
              raise_on_failure: bool = True) -> TrajectoryRecord:
    """Step from ``state0`` to ``state0.t + T`` recording diagnostics.

    Samples are taken every ``sample_every`` steps and at the final time.  A
    step failure is re-raised with its time unless ``raise_on_failure`` is
    False, in which case the partial record carries ``failure``.
    """
    from .diagnostics import lyapunov_value, sync_error

    _check(system, state0)
    if not T > 0:
        raise ConfigurationError(f"T must be positive, got {T}", field="integration.T")
    if sample_every < 1:
        raise ConfigurationError("sample_every must be >= 1", field="integration.sample_every")
    n_steps = int(round(T / cfg.dt))
    if n_steps < 1 or abs(n_steps * cfg.dt - T) > 1e-9 * max(1.0, T):
        raise ConfigurationError(f"T={T} is not an integer multiple of dt={cfg.dt}", field="integration.T")

    stepper = Stepper(system, cfg)
    rows, Us, Vs = [], [], []
    sym = system.symmetric_coupling

    def record(t, U, V, diss):
        st = SystemState(t, U, V)
        m = sync_error(system, st)
        lv = lyapunov_value(system, st, eta) if sym else float("nan")
        rows.append((t, energy(system, st), diss, m.vel_sq, m.pos_half_sq, m.pos_l2_sq, lv,
                     *np.sqrt(np.sum(U * U, axis=1))))
        if keep_states:
            Us.append(U)
            Vs.append(V)

    U, V = state0.positions, state0.velocities
    t0 = state0.t
    diss = 0.0
    record(t0, U, V, diss)
    failure = failure_time = None
    for i in range(1, n_steps + 1):
        t_prev = t0 + (i - 1) * cfg.dt
        try:
            U, V, d = stepper.advance(U, V, t_prev)
        except StepFailure as exc:
            if raise_on_failure:
                exc.time = t_prev
                raise
            failure, failure_time = str(exc), t_prev
            break
        diss += d
        if i % sample_every == 0 or i == n_steps:
            record(t0 + i * cfg.dt, U, V, diss)

    data = np.array(rows)
    return TrajectoryRecord(
        times=data[:, 0], energy=data[:, 1], dissipation=data[:, 2], sync_vel_sq=data[:, 3],
        sync_pos_half_sq=data[:, 4], sync_pos_l2_sq=data[:, 5], lyapunov=data[:, 6],
        l2_norms=data[:, 7:],
        positions=np.array(Us) if keep_states else None,
        velocities=np.array(Vs) if keep_states else None,
        eta=eta, interaction_sign_guaranteed=sym, failure=failure, failure_time=failure_time,
    )


def energy_residual(system: CoupledSystem, record: TrajectoryRecord) -> float:
    """``max_t |E(t) + D(t) - E(0)| / max(1, |E(0)|)``."""
    if len(record) == 0:
        raise ConfigurationError("empty trajectory record")
    E0 = record.energy[0]
    return float(np.max(np.abs(record.energy + record.dissipation - E0)) / max(1.0, abs(E0)))
