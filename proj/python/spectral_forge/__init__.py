"""Spectral preprocessing, augmentation and 1-D CNN evaluation."""

import json

import numpy as np

from . import _core
from ._core import (
    ValidationError,
    augment,
    derive_seed,
    design_matrix,
    generate,
    heuristic_lr,
    linear_baseline,
    mann_whitney_u,
    preprocess,
    savgol,
    snv,
)

__all__ = [
    "ValidationError",
    "augment",
    "derive_seed",
    "design_matrix",
    "generate",
    "heuristic_lr",
    "linear_baseline",
    "mann_whitney_u",
    "preprocess",
    "run_cv",
    "savgol",
    "snv",
]

__version__ = "0.1.0"


def run_cv(x, y, procedure="SNV+DA+GS", *, runs=1, k=6, max_epochs=300, factor=50, seed=0, jobs=1):
    """Cross-validates a procedure and returns the results document as a dict."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    text = _core.run_cv(x, y, procedure, runs, k, max_epochs, factor, seed, jobs)
    return json.loads(text)
