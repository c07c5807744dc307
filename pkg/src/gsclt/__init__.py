"""Numerics for overlap fluctuations in the Ghatak-Sherrington spin glass."""

from .cavity import RSOrderParams, cavity_expectation, local_weights, solve_fixed_point
from .constants import CovarianceModel, SpinConstants, compute_spin_constants, eta_covariance, predict_covariance
from .gaussian import (
    MomentSpec,
    RecursionCoefficients,
    build_TkSk_coefficients,
    build_TS_coefficients,
    isserlis_mixed_moment,
    recursion_moments,
    solve_recursion_constants,
)
from .kernels import BACKEND
from .model import DisorderSample, ModelParams, SpinConfiguration, hamiltonian, local_field, overlap

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "CovarianceModel",
    "DisorderSample",
    "ModelParams",
    "MomentSpec",
    "RSOrderParams",
    "RecursionCoefficients",
    "SpinConfiguration",
    "SpinConstants",
    "build_TS_coefficients",
    "build_TkSk_coefficients",
    "cavity_expectation",
    "compute_spin_constants",
    "eta_covariance",
    "hamiltonian",
    "isserlis_mixed_moment",
    "local_field",
    "local_weights",
    "overlap",
    "predict_covariance",
    "recursion_moments",
    "solve_fixed_point",
    "solve_recursion_constants",
]
