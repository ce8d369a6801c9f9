"""Numerical toolkit for Krein systems, their matrix generalization and the Szegő recursion."""
from .coeffs import CoefficientProfile, PulseSegment, smooth_profile, step_profile, zero_profile
from .krein import KreinState, PropagationError, constant_transfer, propagate
from .sakhnovich import SakhnovichSystem, propagate_matrix, propagate_pair
from .spectral import density_at, limit_diagnostics, thm62_build_and_run

__version__ = "0.1.0"
