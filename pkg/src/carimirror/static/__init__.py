from .bundle import (
    BundleResult,
    bundle_adjust,
    bundle_adjust_core,
    bundle_objective,
    reprojection_errors,
)
from .displacement import DisplacementField, optimize_displacement, worker_count
from .fitting import FitConfig, FitResult, MultiViewCapture, ParametricFitter, fit_parametric_model
from .refine import build_blendshapes, refine_neutral

__all__ = [
    "BundleResult", "bundle_adjust", "bundle_adjust_core", "bundle_objective",
    "reprojection_errors", "DisplacementField", "optimize_displacement",
    "worker_count", "FitConfig", "FitResult", "MultiViewCapture",
    "ParametricFitter", "fit_parametric_model", "build_blendshapes", "refine_neutral",
]
