"""Rolling-shutter lensless video: forward model, TV-regularized reconstruction
and diagnostics."""

__version__ = "0.1.0"

from .shutter import (ShutterMask, ShutterMode, TimingConfig, build_shutter_mask,  # noqa: E402
                      effective_frame_rate, frames_per_capture, is_alias_free)
from .optics import Psf, convolve2d, adjoint_convolve2d, simulate_lenslet_psf  # noqa: E402
from .forward import (ForwardOperator, Measurement, VideoVolume, adjoint_apply,  # noqa: E402
                      forward_apply, operator_norm_sq)
from .solver import SolverParams, SolveReport, fista_solve, tv3d_prox  # noqa: E402

__all__ = [
    "ShutterMask", "ShutterMode", "TimingConfig", "build_shutter_mask",
    "effective_frame_rate", "frames_per_capture", "is_alias_free",
    "Psf", "convolve2d", "adjoint_convolve2d", "simulate_lenslet_psf",
    "ForwardOperator", "Measurement", "VideoVolume", "adjoint_apply", "forward_apply",
    "operator_norm_sq", "SolverParams", "SolveReport", "fista_solve", "tv3d_prox",
]
