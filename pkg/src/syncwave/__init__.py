"""Spectral-Galerkin simulation of coupled damped second-order evolution equations."""

from .spectral import Boundary, Geometry, ModelDomain, OperatorKind, SpectralBasis, build_basis
from .models import (
    Berger,
    CoupledSystem,
    FractionalPower,
    Identity,
    LocalFunction,
    ModalProjector,
    NodalInterpolation,
    SineGordon,
    SubsystemSpec,
    ZeroForce,
    assemble,
    build_lagrange,
    kirchhoff,
)
from .integrator import Scheme, StepperConfig, SystemState, TrajectoryRecord, energy, integrate, step

__version__ = "0.1.0"
