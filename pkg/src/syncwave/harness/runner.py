"""Runs, sweeps and the empirical synchronization-threshold search."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..diagnostics import Modes, Nodes, completeness_defect, fit_rate, s_kappa, stationary_profile, wz_transform
from ..errors import BracketError, ConfigurationError, SyncwaveError
from ..integrator import Stepper, StepperConfig, TrajectoryRecord, energy_residual, integrate
from ..models import (
    CoupledSystem,
    LocalFunction,
    ModalProjector,
    NodalInterpolation,
    SubsystemSpec,
    ZeroForce,
    single_equation,
)
from ..spectral import Boundary
from .config import OUTPUT_DIR_ENV, AnalysisConfig, ExperimentConfig, SweepConfig, build, validate_experiment
from .presets import get_preset

CSV_COLUMNS = ["t", "E", "dissipation_cumulative", "sync_vel_sq", "sync_pos_half_sq", "sync_pos_l2_sq", "V"]

STATIC_STATISTICS = ("kappa", "alpha", "s_kappa", "epsilon_L")
TRAJECTORY_STATISTICS = (
    "final_E", "final_dissipation_cumulative", "final_sync_vel_sq", "final_sync_pos_half_sq",
    "final_sync_pos_l2_sq", "final_sync_total", "final_V", "tail_sup_sync_pos_l2_sq",
    "tail_sup_sync_total", "energy_residual", "omega", "r_squared", "failure_time",
)
EXTRA_PREFIXES = ("antiphase_", "wz_", "chain_", "absorbing_")


def csv_columns(n: int) -> list[str]:
    return CSV_COLUMNS + [f"l2_u{i + 1}" for i in range(n)]


@dataclass
class RunResult:
    config: ExperimentConfig
    system: CoupledSystem
    record: TrajectoryRecord | None
    summary: dict
    csv_path: Path | None = None
    summary_path: Path | None = None


# -- statistics ------------------------------------------------------------------


def _tail(times, fraction):
    t0, t1 = times[0], times[-1]
    return times >= t1 - fraction * (t1 - t0)


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def static_summary(cfg: ExperimentConfig, system: CoupledSystem) -> dict:
    basis = system.basis
    out = {
        "preset": cfg.preset or "custom",
        "domain": basis.domain.label,
        "M": basis.M,
        "n_subsystems": system.n,
        "topology": system.topology.value,
        "kappa": system.kappa,
        "alpha": system.alpha,
        "coupling_operator": cfg.coupling.operator.kind,
        "interaction_sign_guaranteed": system.symmetric_coupling,
        "within_lagrange_hypotheses": system.within_lagrange_hypotheses,
    }
    if system.symmetric_coupling:
        out["s_kappa"] = s_kappa(float(np.min(system.nu)), basis, system.K, system.kappa)
    dirichlet = basis.domain.boundary is Boundary.DIRICHLET
    if dirichlet and isinstance(system.K, ModalProjector):
        out["epsilon_L"] = completeness_defect(basis, Modes(system.K.N))
    elif dirichlet and isinstance(system.K, NodalInterpolation):
        out["epsilon_L"] = completeness_defect(basis, Nodes(tuple(system.K.nodes.tolist())))
    return out


def trajectory_summary(system: CoupledSystem, record: TrajectoryRecord, analysis: AnalysisConfig) -> dict:
    t = record.times
    tail = _tail(t, analysis.tail_fraction)
    out = {
        "status": "ok" if record.failure is None else "step_failure",
        "samples": len(t),
        "final_t": float(t[-1]),
        "final_E": float(record.energy[-1]),
        "final_dissipation_cumulative": float(record.dissipation[-1]),
        "final_sync_vel_sq": float(record.sync_vel_sq[-1]),
        "final_sync_pos_half_sq": float(record.sync_pos_half_sq[-1]),
        "final_sync_pos_l2_sq": float(record.sync_pos_l2_sq[-1]),
        "final_sync_total": float(record.sync_total[-1]),
        "final_V": float(record.lyapunov[-1]),
        "tail_sup_sync_pos_l2_sq": float(np.max(record.sync_pos_l2_sq[tail])),
        "tail_sup_sync_total": float(np.max(record.sync_total[tail])),
        "energy_residual": energy_residual(system, record),
    }
    if record.failure is not None:
        out["failure_time"] = float(record.failure_time)
        out["failure_message"] = record.failure.replace("\n", " ")
    if analysis.fit_rate:
        series = getattr(record, analysis.fit_quantity)
        try:
            fit = fit_rate(t, series, analysis.fit_window)
            out.update(omega=fit.omega, r_squared=fit.r_squared,
                       fit_window_start=fit.window[0], fit_window_end=fit.window[1])
        except SyncwaveError as exc:
            out.update(omega=float("nan"), r_squared=float("nan"), fit_error=exc.kind)
    return out


# -- extras ----------------------------------------------------------------------


def _damped_rate(gamma: float, stiffness: np.ndarray) -> float:
    """Slowest decay rate of ``x'' + gamma x' + s x = 0`` over the given stiffnesses."""
    s = np.asarray(stiffness, dtype=float)
    disc = gamma**2 - 4.0 * s
    rates = np.where(disc < 0, 0.5 * gamma, 0.5 * (gamma - np.sqrt(np.abs(disc))))
    return float(np.min(rates))


def _equal_pair(system: CoupledSystem, what: str):
    if system.n != 2:
        raise ConfigurationError(f"{what} needs a pair", field="analysis.extras")
    a, b = system.subsystems
    if a.nu != b.nu or a.gamma != b.gamma:
        raise ConfigurationError(f"{what} needs equal nu and gamma", field="analysis.extras")
    return a.nu, a.gamma


def integrate_reduced(basis, spec: SubsystemSpec, w0, wdot0, n_steps: int, sample_every: int,
                      cfg: StepperConfig):
    """Integrate one equation with the pair's stepper settings; returns sampled (W, Wdot)."""
    single = single_equation(basis, spec)
    stepper = Stepper(single, cfg)
    U, V = np.asarray(w0, float)[None], np.asarray(wdot0, float)[None]
    Ws, Vs = [U[0]], [V[0]]
    for i in range(1, n_steps + 1):
        U, V, _ = stepper.advance(U, V, (i - 1) * cfg.dt)
        if i % sample_every == 0 or i == n_steps:
            Ws.append(U[0])
            Vs.append(V[0])
    return np.array(Ws), np.array(Vs)


def _antiphase(cfg, system, record, stepper_cfg) -> dict:
    nu, gamma = _equal_pair(system, "antiphase analysis")
    basis = system.basis
    lam_link = system.sine_link
    if not system.sine_link or any(not isinstance(s.nonlinearity, ZeroForce) for s in system.subsystems):
        raise ConfigurationError("antiphase analysis needs B = 0 and a sine link", field="analysis.extras")
    if basis.domain.operator.value != "laplacian":
        raise ConfigurationError("antiphase analysis needs the Laplacian", field="domain.operator")
    h = 0.5 * (system.forcing[0] + system.forcing[1])
    g = 0.5 * (system.forcing[0] - system.forcing[1])
    z_star = stationary_profile(basis, h) / nu
    q = []
    for i in range(len(record)):
        (_, _), (z, zt) = wz_transform(record.state(i))
        d = z - z_star
        q.append(math.sqrt(float(np.sum(basis.lam * d * d))) + math.sqrt(float(zt @ zt)))
    q = np.array(q)
    out = {"antiphase_z_initial": float(q[0]), "antiphase_z_final": float(q[-1]),
           "antiphase_predicted_omega": _damped_rate(gamma, nu * basis.lam)}
    try:
        fit = fit_rate(record.times, q, cfg.analysis.fit_window)
        out.update(antiphase_omega=fit.omega, antiphase_r_squared=fit.r_squared)
    except SyncwaveError as exc:
        out.update(antiphase_omega=float("nan"), antiphase_r_squared=float("nan"), antiphase_fit_error=exc.kind)

    # w = (u - v)/2 solves w'' + gamma w' + nu A w + lambda sin 2w = g on its own
    spec = SubsystemSpec(nu, gamma, LocalFunction(
        phi=lambda s: lam_link * np.sin(2.0 * s),
        prim=lambda s: 0.5 * lam_link * (1.0 - np.cos(2.0 * s)),
        globally_lipschitz=True, label="sin2"), forcing=g)
    (w0, wt0), _ = wz_transform(record.state(0))
    n_steps = int(round(cfg.integration.T / cfg.integration.dt))
    W, Wt = integrate_reduced(basis, spec, w0, wt0, n_steps, cfg.integration.sample_every, stepper_cfg)
    P, V = record.positions, record.velocities
    Wp, Wtp = 0.5 * (P[:, 0] - P[:, 1]), 0.5 * (V[:, 0] - V[:, 1])
    m = len(record)
    out["antiphase_w_mismatch"] = float(max(np.max(np.abs(Wp - W[:m])), np.max(np.abs(Wtp - Wt[:m]))))
    return out


def _wz_decay(cfg, system, record) -> dict:
    nu, gamma = _equal_pair(system, "w/z decay analysis")
    lam, kappa = system.basis.lam, system.kappa
    kd = system.k_diag if system.k_diag is not None else np.ones_like(lam)
    P, V = record.positions, record.velocities
    w, wt = 0.5 * (P[:, 0] - P[:, 1]), 0.5 * (V[:, 0] - V[:, 1])
    # energy norm of the linear part of the w-equation, A + 2 kappa K
    stiff = nu * lam + 2.0 * kappa * kd
    q = np.sqrt(np.sum(wt * wt, axis=1) + np.sum(stiff * w * w, axis=1))
    out = {"wz_w_initial": float(q[0]), "wz_w_final": float(q[-1]),
           "wz_linear_gap": float(np.min(stiff)),
           "wz_predicted_omega": _damped_rate(gamma, stiff)}
    try:
        fit = fit_rate(record.times, q, cfg.analysis.fit_window)
        out.update(wz_w_omega=fit.omega, wz_w_r_squared=fit.r_squared)
    except SyncwaveError as exc:
        out.update(wz_w_omega=float("nan"), wz_w_r_squared=float("nan"), wz_fit_error=exc.kind)
    return out


def absorbing_norm(system: CoupledSystem, U, V) -> float:
    """``|U'|^2 + sum nu_i |A^{1/2} u_i|^2 + kappa sum_edges (K(u_i - u_j), u_i - u_j)``."""
    lam = system.basis.lam
    val = float(np.sum(V * V)) + float(np.sum(system.nu[:, None] * lam * U * U))
    return val + system.kappa * float(np.sum(system.couple(U) * U))


def _absorbing(cfg, system, record) -> dict:
    if not system.symmetric_coupling:
        raise ConfigurationError("absorbing level needs a symmetric coupling", field="analysis.extras")
    level = np.array([absorbing_norm(system, record.positions[i], record.velocities[i])
                      for i in range(len(record))])
    tail = _tail(record.times, cfg.analysis.tail_fraction)
    return {"absorbing_initial": float(level[0]), "absorbing_level": float(np.max(level[tail]))}


def _chain(cfg, system, record) -> dict:
    P, V = record.positions, record.velocities
    lam = system.basis.lam
    tail = _tail(record.times, cfg.analysis.tail_fraction)
    out = {"chain_nu_average": float(np.mean(system.nu))}
    for j, (a, b) in enumerate(system.edges):
        d, dv = P[:, a] - P[:, b], V[:, a] - V[:, b]
        s = np.sum(dv * dv, axis=1) + np.sum(lam * d * d, axis=1)
        out[f"chain_edge{j + 1}_tail_sup_sync_total"] = float(np.max(s[tail]))
    dE = np.diff(record.energy)
    out["chain_energy_max_increase"] = float(max(0.0, np.max(dE))) if len(dE) else 0.0
    return out


# -- run -------------------------------------------------------------------------


def output_dir(cfg_dir: str, override: str | os.PathLike | None = None) -> Path:
    if override is not None:
        return Path(override)
    env = os.environ.get(OUTPUT_DIR_ENV)
    return Path(env) if env else Path(cfg_dir)


def run_experiment(cfg: ExperimentConfig, static_only: bool = False) -> RunResult:
    """Build, integrate and summarize without writing files."""
    system, state0, stepper_cfg = build(cfg)
    summary = static_summary(cfg, system)
    summary.update(dt=cfg.integration.dt, T=cfg.integration.T, scheme=cfg.integration.scheme)
    if static_only:
        return RunResult(cfg, system, None, summary)
    ig = cfg.integration
    extras = cfg.analysis.extras
    record = integrate(system, state0, ig.T, stepper_cfg, ig.sample_every, ig.eta,
                       keep_states=bool(extras), raise_on_failure=False)
    summary.update(trajectory_summary(system, record, cfg.analysis))
    if record.failure is None:
        for name in extras:
            if name == "antiphase":
                summary.update(_antiphase(cfg, system, record, stepper_cfg))
            elif name == "wz_decay":
                summary.update(_wz_decay(cfg, system, record))
            elif name == "absorbing_level":
                summary.update(_absorbing(cfg, system, record))
            elif name == "chain":
                summary.update(_chain(cfg, system, record))
    return RunResult(cfg, system, record, summary)


def write_trajectory_csv(path, record: TrajectoryRecord) -> None:
    cols = [record.times, record.energy, record.dissipation, record.sync_vel_sq,
            record.sync_pos_half_sq, record.sync_pos_l2_sq, record.lyapunov]
    cols += [record.l2_norms[:, i] for i in range(record.l2_norms.shape[1])]
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(csv_columns(record.l2_norms.shape[1])) + "\n")
        for row in zip(*cols):
            fh.write(",".join(repr(float(x)) for x in row) + "\n")


def write_summary(path, summary: dict) -> None:
    with open(path, "w", newline="\n") as fh:
        for key, value in summary.items():
            fh.write(f"{key}={_fmt(value)}\n")


def read_summary(path) -> dict:
    out = {}
    with open(path) as fh:
        for line in fh:
            key, _, value = line.rstrip("\n").partition("=")
            out[key] = value
    return out


def run(cfg: ExperimentConfig, out_dir=None) -> RunResult:
    """Run and write ``<name>.csv`` and ``<name>.summary.txt`` into the output directory."""
    result = run_experiment(cfg)
    d = output_dir(cfg.output.directory, out_dir)
    d.mkdir(parents=True, exist_ok=True)
    result.csv_path = d / f"{cfg.output.name}.csv"
    result.summary_path = d / f"{cfg.output.name}.summary.txt"
    write_trajectory_csv(result.csv_path, result.record)
    write_summary(result.summary_path, result.summary)
    return result


# -- sweep -----------------------------------------------------------------------


def _check_statistics(names):
    known = set(STATIC_STATISTICS) | set(TRAJECTORY_STATISTICS)
    for i, name in enumerate(names):
        if name not in known and not name.startswith(EXTRA_PREFIXES):
            raise ConfigurationError(f"unknown statistic {name!r}", field=f"statistics.{i}")


def _with_axis(data: dict, axis: str, value: float) -> dict:
    import copy

    data = copy.deepcopy(data)
    coupling = data.setdefault("coupling", {})
    if axis == "kappa":
        coupling["kappa"] = float(value)
        coupling.pop("modal_gap_factor", None)
    elif axis == "alpha":
        coupling["alpha"] = float(value)
    else:
        if float(value) != int(value):
            raise ConfigurationError(f"{axis} grid needs integer values, got {value}", field="values")
        if axis == "modal_n":
            coupling["operator"] = {"kind": "modal", "N": int(value)}
        else:
            coupling["operator"] = {"kind": "nodal", "equispaced": int(value)}
    return data


def sweep_base(scfg: SweepConfig) -> dict:
    from .config import apply_overrides

    base = get_preset(scfg.base_preset) if scfg.base_preset else scfg.base
    return apply_overrides(base, scfg.overrides)


def sweep(scfg: SweepConfig, out_dir=None, write: bool = True):
    """One summary row per grid point; failures are recorded in-row and the sweep continues.

    Returns ``(header, rows, path)``; rows hold formatted strings.
    """
    _check_statistics(scfg.statistics)
    base = sweep_base(scfg)
    validate_experiment(base)
    static = all(s in STATIC_STATISTICS for s in scfg.statistics)
    header = [scfg.axis, "status"] + list(scfg.statistics)
    rows = []
    for value in scfg.values:
        try:
            cfg = validate_experiment(_with_axis(base, scfg.axis, value))
            summary = run_experiment(cfg, static_only=static).summary
            status = summary.get("status", "ok")
            stats = [_fmt(summary.get(name, float("nan"))) for name in scfg.statistics]
        except SyncwaveError as exc:
            status = f"error:{exc.kind}"
            stats = ["nan"] * len(scfg.statistics)
        rows.append([_fmt(float(value)), status] + stats)
    path = None
    if write:
        d = output_dir(scfg.output.directory, out_dir)
        d.mkdir(parents=True, exist_ok=True)
        path = d / f"{scfg.output.name}.csv"
        with open(path, "w", newline="\n") as fh:
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join(row) + "\n")
    return header, rows, path


# -- threshold search ----------------------------------------------------------------


@dataclass
class ThresholdResult:
    kappa_star: float
    kappa_lower: float
    s_kappa_star: float | None
    omega: float
    r_squared: float
    evaluations: list = field(default_factory=list)  # (kappa, final sync_total)

    def as_dict(self) -> dict:
        return {"kappa_star": self.kappa_star, "kappa_lower": self.kappa_lower,
                "s_kappa_star": self.s_kappa_star if self.s_kappa_star is not None else "none",
                "omega": self.omega, "r_squared": self.r_squared, "evaluations": len(self.evaluations)}


def threshold_search(cfg: ExperimentConfig, kappa_min: float, kappa_max: float, target: float = 1e-8,
                     horizon: float | None = None, rel_width: float = 0.05) -> ThresholdResult:
    """Bisect on kappa for the smallest value with final sync error below ``target``.

    Synchronization at time ``horizon`` (default: the configured T) must fail at
    ``kappa_min`` and hold at ``kappa_max``.  The midpoint is geometric when
    ``kappa_min > 0``.  The reported ``kappa_star`` is the upper end of the final
    bracket, i.e. the smallest tested value that synchronized.
    """
    T = cfg.integration.T if horizon is None else horizon
    if not T > 0:
        raise ConfigurationError(f"criterion horizon must be positive, got {T}", field="criterion.horizon")
    if not target > 0:
        raise ConfigurationError("criterion target must be positive", field="criterion.target")
    if not 0 <= kappa_min < kappa_max:
        raise ConfigurationError("need 0 <= kappa_min < kappa_max", field="kappa_range")
    if not 0 < rel_width < 1:
        raise ConfigurationError("relative width must lie in (0, 1)", field="rel_width")
    base = cfg.model_dump()
    base["integration"]["T"] = T
    base["coupling"]["modal_gap_factor"] = None
    base["analysis"]["fit_rate"] = True
    base["analysis"]["extras"] = []
    evaluations = []

    def evaluate(kappa):
        c = validate_experiment({**base, "coupling": {**base["coupling"], "kappa": kappa}})
        res = run_experiment(c)
        if res.summary["status"] != "ok":
            raise BracketError(f"step failure at kappa={kappa}: {res.summary.get('failure_message')}",
                               field="kappa_range")
        evaluations.append((kappa, res.summary["final_sync_total"]))
        return res

    lo_res = evaluate(kappa_min)
    if lo_res.summary["final_sync_total"] < target:
        raise BracketError(
            f"already synchronized at the lower endpoint kappa={kappa_min} "
            f"(sync={lo_res.summary['final_sync_total']:.3e} < {target:.1e})", field="kappa_min")
    hi_res = evaluate(kappa_max)
    if not hi_res.summary["final_sync_total"] < target:
        raise BracketError(
            f"not synchronized at the upper endpoint kappa={kappa_max} "
            f"(sync={hi_res.summary['final_sync_total']:.3e} >= {target:.1e})", field="kappa_max")
    lo, hi = kappa_min, kappa_max
    while (hi - lo) > rel_width * hi:
        mid = math.sqrt(lo * hi) if lo > 0 else 0.5 * (lo + hi)
        res = evaluate(mid)
        if res.summary["final_sync_total"] < target:
            hi, hi_res = mid, res
        else:
            lo = mid
    system = hi_res.system
    sk = s_kappa(float(np.min(system.nu)), system.basis, system.K, hi) if system.symmetric_coupling else None
    return ThresholdResult(hi, lo, sk, hi_res.summary.get("omega", float("nan")),
                           hi_res.summary.get("r_squared", float("nan")), evaluations)
