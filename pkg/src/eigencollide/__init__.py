"""Eigenvalue collisions of matrix-valued Gaussian random fields."""

__version__ = "0.1.0"

from .collision import CollisionConfig, detect_collision, estimate_probability, phase_scan, threshold
from .dimension import box_dimension, empirical_dimension, riesz_energy, theoretical_dim
from .field import CovarianceKernel, GridSpec, HurstVector, sample_field, structure_check
from .matrix import ProcessConfig, assemble_path, identify, vectorize
from .spectral import contour_projection, continue_eigenbasis, eigh_batch, k_gap
from .strata import random_stratum_point, stratum_codim, tangent_rank, verify_strata

__all__ = [
    "CollisionConfig", "CovarianceKernel", "GridSpec", "HurstVector", "ProcessConfig",
    "assemble_path", "box_dimension", "continue_eigenbasis", "contour_projection", "detect_collision",
    "eigh_batch", "empirical_dimension", "estimate_probability", "identify", "k_gap", "phase_scan",
    "random_stratum_point", "riesz_energy", "sample_field", "stratum_codim", "structure_check",
    "tangent_rank", "theoretical_dim", "threshold", "vectorize", "verify_strata",
]
