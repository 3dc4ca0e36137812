"""Experiment configuration: TOML schema, validation and construction of library objects."""

from __future__ import annotations

import copy
from typing import Any, List, Literal, Optional, Tuple, Union

import numpy as np
import tomli
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from ..errors import ConfigurationError, SyncwaveError
from ..integrator import StepperConfig, SystemState
from ..models import (
    Berger,
    FractionalPower,
    Identity,
    ModalProjector,
    SineGordon,
    SubsystemSpec,
    ZeroForce,
    assemble,
    build_lagrange,
    kirchhoff,
)
from ..spectral import ModelDomain, SpectralBasis, build_basis, eval_modes, from_grid

OUTPUT_DIR_ENV = "SYNCWAVE_OUTPUT_DIR"


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DomainConfig(_Strict):
    geometry: Literal["interval", "rectangle"] = "interval"
    boundary: Literal["dirichlet", "neumann"] = "dirichlet"
    operator: Literal["laplacian", "hinged"] = "laplacian"
    modes: int = Field(32, ge=1)


class FieldConfig(_Strict):
    """A coefficient vector built by a named generator.

    ``random`` draws ``amplitude * N(0, 1) / max(lambda_k, 1)**decay`` from a
    PCG64 generator seeded with ``seed``.
    """

    kind: Literal["zero", "single_mode", "constant", "point", "random", "coeffs"] = "zero"
    k: int = Field(1, ge=1)
    amplitude: float = 1.0
    value: float = 0.0
    x: List[float] = Field(default_factory=list)
    seed: int = 0
    decay: float = 1.0
    values: List[float] = Field(default_factory=list)


class ForceConfig(_Strict):
    kind: Literal["zero", "sine_gordon", "kirchhoff", "berger"] = "zero"
    lambda_s: float = 1.0
    a: float = Field(0.0, ge=0)
    b: float = 0.0
    kappa_b: float = Field(1.0, ge=0)
    Gamma: float = 0.0


class SubsystemConfig(_Strict):
    nu: float = Field(1.0, gt=0)
    gamma: float = Field(0.0, ge=0)
    nonlinearity: ForceConfig = Field(default_factory=ForceConfig)
    forcing: FieldConfig = Field(default_factory=FieldConfig)


class CouplingOperatorConfig(_Strict):
    kind: Literal["identity", "fractional_power", "modal", "nodal"] = "identity"
    sigma: float = Field(0.5, ge=0, le=0.5)
    N: int = Field(0, ge=0)
    nodes: List[Union[float, List[float]]] = Field(default_factory=list)
    equispaced: int = Field(0, ge=0)


class CouplingConfig(_Strict):
    topology: Literal["pair", "chain"] = "pair"
    alpha: float = Field(0.0, ge=0)
    kappa: float = Field(0.0, ge=0)
    operator: CouplingOperatorConfig = Field(default_factory=CouplingOperatorConfig)
    sine_link: float = 0.0
    # when set with a modal operator, kappa = factor * nu_1 * (lambda_{N+1} - lambda_1)
    modal_gap_factor: Optional[float] = Field(None, gt=0)


class IntegrationConfig(_Strict):
    dt: float = Field(0.01, gt=0)
    T: float = Field(10.0, gt=0)
    scheme: Literal["implicit_midpoint", "exponential_split"] = "implicit_midpoint"
    sample_every: int = Field(10, ge=1)
    solver_tol: float = Field(1e-12, gt=0)
    max_iterations: int = Field(100, ge=1)
    eta: float = Field(0.05, ge=0)


class InitialConfig(_Strict):
    position: FieldConfig = Field(default_factory=FieldConfig)
    velocity: FieldConfig = Field(default_factory=FieldConfig)


class AnalysisConfig(_Strict):
    fit_rate: bool = False
    fit_quantity: Literal["sync_total", "sync_pos_l2_sq", "sync_pos_half_sq", "sync_vel_sq"] = "sync_total"
    fit_window: Optional[Tuple[float, float]] = None
    tail_fraction: float = Field(0.5, gt=0, le=1)
    s_star: Optional[float] = None
    extras: List[Literal["antiphase", "absorbing_level", "wz_decay", "chain"]] = Field(
        default_factory=list
    )


class OutputConfig(_Strict):
    directory: str = "syncwave_out"
    name: str = "run"


class ExperimentConfig(_Strict):
    preset: Optional[str] = None
    description: str = ""
    domain: DomainConfig = Field(default_factory=DomainConfig)
    subsystems: List[SubsystemConfig] = Field(min_length=2)
    coupling: CouplingConfig = Field(default_factory=CouplingConfig)
    integration: IntegrationConfig = Field(default_factory=IntegrationConfig)
    initial: List[InitialConfig] = Field(default_factory=list)
    analysis: AnalysisConfig = Field(default_factory=AnalysisConfig)
    output: OutputConfig = Field(default_factory=OutputConfig)

    @model_validator(mode="after")
    def _lengths(self):
        if self.initial and len(self.initial) != len(self.subsystems):
            raise ValueError(
                f"initial has {len(self.initial)} entries but there are {len(self.subsystems)} subsystems"
            )
        if self.coupling.topology == "pair" and len(self.subsystems) != 2:
            raise ValueError("pair topology needs exactly 2 subsystems")
        return self


class SweepConfig(_Strict):
    axis: Literal["kappa", "alpha", "modal_n", "nodes"]
    values: List[float] = Field(min_length=1)
    statistics: List[str] = Field(default_factory=lambda: ["tail_sup_sync_pos_l2_sq"])
    base_preset: Optional[str] = None
    overrides: dict = Field(default_factory=dict)
    base: Optional[dict] = None
    output: OutputConfig = Field(default_factory=lambda: OutputConfig(name="sweep"))

    @field_validator("values")
    @classmethod
    def _increasing(cls, v):
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("sweep grid must be strictly increasing")
        return v

    @model_validator(mode="after")
    def _one_base(self):
        if (self.base is None) == (self.base_preset is None):
            raise ValueError("give exactly one of 'base' or 'base_preset'")
        return self


# -- loading -----------------------------------------------------------------------


def _field_path(loc) -> str:
    return ".".join(str(p) for p in loc)


def validate_experiment(data: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        err = exc.errors()[0]
        raise ConfigurationError(err["msg"], field=_field_path(err["loc"])) from None


def validate_sweep(data: dict) -> SweepConfig:
    try:
        return SweepConfig.model_validate(data)
    except ValidationError as exc:
        err = exc.errors()[0]
        raise ConfigurationError(err["msg"], field=_field_path(err["loc"])) from None


def load_toml(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomli.load(fh)
    except tomli.TOMLDecodeError as exc:
        raise ConfigurationError(f"invalid TOML in {path}: {exc}") from None
    except OSError as exc:
        raise ConfigurationError(f"cannot read {path}: {exc}") from None


def parse_override(text: str) -> tuple[list[str], Any]:
    """``a.b.c=value`` with the value parsed as a TOML literal (bare words become strings)."""
    if "=" not in text:
        raise ConfigurationError(f"override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    try:
        value = tomli.loads(f"v = {raw}")["v"]
    except tomli.TOMLDecodeError:
        value = raw
    return key.strip().split("."), value


def deep_merge(base: dict, update: dict) -> dict:
    """Recursively merge tables; lists and scalars in ``update`` replace those in ``base``."""
    out = copy.deepcopy(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def apply_overrides(data: dict, overrides) -> dict:
    """Set dotted keys in a nested dict; list elements are addressed by integer index."""
    data = copy.deepcopy(data)
    items = overrides.items() if isinstance(overrides, dict) else (parse_override(o) for o in overrides)
    for path, value in items:
        if isinstance(path, str):
            path = path.split(".")
        node = data
        for part in path[:-1]:
            if isinstance(node, list):
                node = node[int(part)]
            else:
                node = node.setdefault(part, {})
        last = path[-1]
        if isinstance(node, list):
            node[int(last)] = value
        else:
            node[last] = value
    return data


# -- construction ------------------------------------------------------------------


def make_basis(cfg: ExperimentConfig) -> SpectralBasis:
    d = cfg.domain
    return build_basis(ModelDomain(d.geometry, d.boundary, d.operator), d.modes)


def make_field(basis: SpectralBasis, fc: FieldConfig, where: str = "") -> np.ndarray:
    M = basis.M
    if fc.kind == "zero":
        return np.zeros(M)
    if fc.kind == "single_mode":
        if fc.k > M:
            raise ConfigurationError(f"mode {fc.k} exceeds M={M}", field=f"{where}.k")
        return fc.amplitude * basis.unit(fc.k)
    if fc.kind == "constant":
        return from_grid(basis, np.full(basis.grid_shape, fc.value))
    if fc.kind == "point":
        if len(fc.x) != basis.domain.dim:
            raise ConfigurationError(f"point load needs {basis.domain.dim} coordinates", field=f"{where}.x")
        return fc.amplitude * eval_modes(basis, [fc.x])[0]
    if fc.kind == "random":
        rng = np.random.Generator(np.random.PCG64(fc.seed))
        return fc.amplitude * rng.standard_normal(M) / np.maximum(basis.lam, 1.0) ** fc.decay
    if len(fc.values) > M:
        raise ConfigurationError(f"{len(fc.values)} coefficients exceed M={M}", field=f"{where}.values")
    out = np.zeros(M)
    out[: len(fc.values)] = fc.values
    return out


def make_force(fc: ForceConfig):
    if fc.kind == "zero":
        return ZeroForce()
    if fc.kind == "sine_gordon":
        return SineGordon(fc.lambda_s)
    if fc.kind == "kirchhoff":
        return kirchhoff(fc.a, fc.b)
    return Berger(fc.kappa_b, fc.Gamma)


def equispaced_nodes(N: int) -> list[float]:
    return [j * np.pi / (N + 1) for j in range(1, N + 1)]


def make_coupling(basis: SpectralBasis, oc: CouplingOperatorConfig):
    if oc.kind == "identity":
        return Identity()
    if oc.kind == "fractional_power":
        return FractionalPower(oc.sigma)
    if oc.kind == "modal":
        return ModalProjector(oc.N)
    nodes = oc.nodes or (equispaced_nodes(oc.equispaced) if oc.equispaced else [])
    if not nodes:
        raise ConfigurationError("nodal coupling needs 'nodes' or 'equispaced'", field="coupling.operator.nodes")
    return build_lagrange(basis, nodes)


def _with_field(exc: SyncwaveError, prefix: str) -> SyncwaveError:
    exc.field = f"{prefix}.{exc.field}" if exc.field else prefix
    return exc


def build(cfg: ExperimentConfig):
    """Construct (system, initial state, stepper config); raises on any invalid field."""
    basis = make_basis(cfg)
    subs = []
    for i, sc in enumerate(cfg.subsystems):
        where = f"subsystems.{i}"
        try:
            subs.append(SubsystemSpec(sc.nu, sc.gamma, make_force(sc.nonlinearity),
                                      make_field(basis, sc.forcing, f"{where}.forcing")))
        except SyncwaveError as exc:
            raise _with_field(exc, where) if not (exc.field or "").startswith(where) else exc
    cc = cfg.coupling
    try:
        K = make_coupling(basis, cc.operator)
    except SyncwaveError as exc:
        raise exc if exc.field else _with_field(exc, "coupling.operator")
    kappa = cc.kappa
    if cc.modal_gap_factor is not None:
        if not isinstance(K, ModalProjector):
            raise ConfigurationError("modal_gap_factor needs a modal coupling operator",
                                     field="coupling.modal_gap_factor")
        if K.N >= basis.M:
            raise ConfigurationError("modal rank must be below M", field="coupling.operator.N")
        kappa = cc.modal_gap_factor * cfg.subsystems[0].nu * float(basis.lam[K.N] - basis.lam[0])
    system = assemble(basis, subs, cc.topology, cc.alpha, kappa, K, cc.sine_link)

    n = len(subs)
    initial = cfg.initial or [InitialConfig() for _ in range(n)]
    U = np.array([make_field(basis, ic.position, f"initial.{i}.position") for i, ic in enumerate(initial)])
    V = np.array([make_field(basis, ic.velocity, f"initial.{i}.velocity") for i, ic in enumerate(initial)])
    ig = cfg.integration
    try:
        stepper_cfg = StepperConfig(ig.dt, ig.scheme, ig.solver_tol, ig.max_iterations)
    except SyncwaveError as exc:
        raise _with_field(exc, "integration")
    n_steps = round(ig.T / ig.dt)
    if abs(n_steps * ig.dt - ig.T) > 1e-9 * max(1.0, ig.T):
        raise ConfigurationError(f"T={ig.T} is not an integer multiple of dt={ig.dt}", field="integration.T")
    if ig.scheme == "exponential_split" and system.k_diag is None:
        raise ConfigurationError("exponential splitting needs a diagonal coupling operator",
                                 field="integration.scheme")
    return system, SystemState(0.0, U, V), stepper_cfg
