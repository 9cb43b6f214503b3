"""Estimation error metric shared by the pipelines and the harness."""

import numpy as np

from ._validation import as_vector
from .exceptions import UndefinedMetricError


def error_metric(x0_true, x0_hat):
    """Relative error ``||x0_true - x0_hat||_2 / ||x0_true||_2``."""
    x0_true = as_vector(x0_true, name="x0_true")
    x0_hat = as_vector(x0_hat, x0_true.size, "x0_hat")
    denom = np.linalg.norm(x0_true)
    if denom == 0.0:
        raise UndefinedMetricError("relative error is undefined for a zero true state")
    return float(np.linalg.norm(x0_true - x0_hat) / denom)
