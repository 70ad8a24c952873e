"""Facial-patch ensemble BMI estimation.

Thin wrapper over the native extension: six lightweight CNN regressors, one
per face region, averaged into a single BMI estimate.
"""

from patchbmi._core import (
    NUM_LANDMARKS,
    PATCH_SIDE,
    REGION_NAMES,
    EnsembleModel,
    ProcessingError,
    ValidationError,
    compute_bmi,
    inches_to_m,
    init_ensemble,
    layer_parameter_counts,
    lbs_to_kg,
    load_bundle,
    mae,
)

__version__ = "0.1.0"

__all__ = [
    "NUM_LANDMARKS",
    "PATCH_SIDE",
    "REGION_NAMES",
    "EnsembleModel",
    "ProcessingError",
    "ValidationError",
    "compute_bmi",
    "inches_to_m",
    "init_ensemble",
    "layer_parameter_counts",
    "lbs_to_kg",
    "load_bundle",
    "mae",
]
