"""
Prediction error metrics.

``spe`` is the Frobenius-norm error of a prediction relative to the norm of
the truth. ``tspe`` maps it through ``-1 / log(spe)``, which spreads small
errors apart; the map is only defined for ``0 <= spe < 1``.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = ["OUT_OF_DOMAIN", "spe", "tspe", "tspe_defined"]

# marker returned by ``tspe`` when the transform is undefined
OUT_OF_DOMAIN = float("nan")


def spe(Y_true, Y_hat) -> float:
    """Standardized prediction error ``||Y - Y_hat||_F / ||Y||_F``."""
    Y_true = np.asarray(Y_true, dtype=np.float64)
    Y_hat = np.asarray(Y_hat, dtype=np.float64)
    if Y_true.shape != Y_hat.shape:
        raise ValueError(f"shape mismatch: {Y_true.shape} vs {Y_hat.shape}")
    denom = float(np.linalg.norm(Y_true))
    if denom == 0.0:
        raise ValueError("reference tensor is zero")
    return float(np.linalg.norm(Y_true - Y_hat)) / denom


def tspe_defined(value: float) -> bool:
    return 0.0 <= value < 1.0


def tspe(value: float) -> float:
    """Transformed error ``-1 / log(spe)``.

    Returns ``0`` at ``spe = 0`` (the limit) and :data:`OUT_OF_DOMAIN` for
    ``spe >= 1``, where the transform stops being an increasing function of
    the error. Callers should keep the raw value alongside.
    """
    value = float(value)
    if value < 0 or math.isnan(value):
        raise ValueError(f"SPE must be nonnegative, got {value}")
    if value == 0.0:
        return 0.0
    if value >= 1.0:
        return OUT_OF_DOMAIN
    return -1.0 / math.log(value)
