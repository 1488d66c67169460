"""Streaming multi-zone speech separation toolkit.

Neural speech/noise mask estimation feeding a streaming MVDR beamformer,
plus an impulse-response laboratory, a cabin scene synthesizer, evaluation
metrics, and complexity accounting.
"""

from . import augment, dsp, features, irlab, metrics, model, mvdr, pipeline
from .errors import (
    CabinSepError,
    InvalidConfig,
    InvalidInput,
    InvalidManifest,
    NumericalError,
    WeightShapeError,
)

__version__ = "0.1.0"

__all__ = [
    "augment",
    "dsp",
    "features",
    "irlab",
    "metrics",
    "model",
    "mvdr",
    "pipeline",
    "CabinSepError",
    "InvalidConfig",
    "InvalidInput",
    "InvalidManifest",
    "NumericalError",
    "WeightShapeError",
    "__version__",
]
