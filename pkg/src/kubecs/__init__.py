"""Cube-based weighted Kronecker compressive sensing for video."""

from .linalg import KroneckerOperator, MatrixOperator, dct_matrix, kron_apply
from .metrics import SweepSpec, emit_csv, psnr, run_sweep
from .pipeline import SensingConfig, Variant, Weighting, sense_and_reconstruct
from .solvers import SolveOptions, irls, rwl1, weighted_bp
from .weighting import perceptual_weights

__version__ = "0.1.0"

__all__ = [
    "KroneckerOperator",
    "MatrixOperator",
    "dct_matrix",
    "kron_apply",
    "SweepSpec",
    "emit_csv",
    "psnr",
    "run_sweep",
    "SensingConfig",
    "Variant",
    "Weighting",
    "sense_and_reconstruct",
    "SolveOptions",
    "irls",
    "rwl1",
    "weighted_bp",
    "perceptual_weights",
]
