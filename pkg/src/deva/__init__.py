"""Decoupled-variance adaptive optimizers with desk-scale quadratic benchmarks."""

__version__ = "0.1.0"

from deva.errors import (
    DegenerateBasis,
    DevaError,
    InvalidConfig,
    InvalidInput,
    IoError,
    NotPositiveDefinite,
    NumericalBreakdown,
    ShapeMismatch,
    UndefinedForZero,
)
from deva.linalg import Rng, cholesky, kron, qr_orthonormalize, rng_gaussian, svd, sym_eig
from deva.msign import msign_exact, msign_newton_schulz, rms_alignment_scale
from deva.optimizers import HyperParams, Optimizer, make_optimizer, schedule_lr
from deva.problems import build_trace_quadratic, full_gradient, kaczmarz_gradient, quadratic_vector_problem

__all__ = [
    "DegenerateBasis",
    "DevaError",
    "HyperParams",
    "InvalidConfig",
    "InvalidInput",
    "IoError",
    "NotPositiveDefinite",
    "NumericalBreakdown",
    "Optimizer",
    "Rng",
    "ShapeMismatch",
    "UndefinedForZero",
    "build_trace_quadratic",
    "cholesky",
    "full_gradient",
    "kaczmarz_gradient",
    "kron",
    "make_optimizer",
    "msign_exact",
    "msign_newton_schulz",
    "qr_orthonormalize",
    "quadratic_vector_problem",
    "rms_alignment_scale",
    "rng_gaussian",
    "schedule_lr",
    "svd",
    "sym_eig",
]
