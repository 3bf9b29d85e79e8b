"""Forecast error metrics on capacity-normalised power."""

from __future__ import annotations

import numpy as np

from .errors import LengthError


def _errors(x, xhat) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64).ravel()
    xhat = np.asarray(xhat, dtype=np.float64).ravel()
    if x.shape != xhat.shape or x.size == 0:
        raise LengthError(f"need equal non-zero lengths, got {x.size} and {xhat.size}")
    return xhat - x


def rmse(x, xhat, percent: bool = True) -> float:
    """Root mean square error; ``percent`` reports it as % of capacity."""
    e = _errors(x, xhat)
    v = float(np.sqrt(np.mean(e * e)))
    return 100.0 * v if percent else v


def mae(x, xhat, percent: bool = True) -> float:
    e = _errors(x, xhat)
    v = float(np.mean(np.abs(e)))
    return 100.0 * v if percent else v
