"""Forecast accuracy metrics and the naive reference predictors.

All five metrics are computed over every element of the evaluated set
(flattened), so RMSE is exactly the square root of MSE and the relative
squared error normalizes by deviations from the set-wide target mean.
MAPE excludes elements whose target magnitude is below a threshold and
reports how many were dropped.
"""

from __future__ import annotations

import numpy as np

from .errors import DataError


def forecast_metrics(pred, target, mape_zero_threshold: float = 1e-8) -> dict:
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise DataError(f"metric shapes differ: {pred.shape} vs {target.shape}")
    if pred.size == 0:
        raise DataError("metrics over an empty array")
    p = pred.reshape(-1)
    y = target.reshape(-1)

    err = y - p
    mse = float(np.mean(err ** 2))
    mae = float(np.mean(np.abs(err)))
    rmse = float(np.sqrt(mse))

    centered = y - y.mean()
    denom = float(np.sqrt(np.sum(centered ** 2)))
    if denom == 0.0:
        rse = 0.0 if float(np.sqrt(np.sum(err ** 2))) == 0.0 else float("inf")
    else:
        rse = float(np.sqrt(np.sum(err ** 2)) / denom)

    usable = np.abs(y) >= mape_zero_threshold
    excluded = int(np.sum(~usable))
    if np.any(usable):
        mape = float(np.mean(np.abs(err[usable] / y[usable])))
    else:
        mape = float("nan")

    return {
        "mse": mse,
        "mae": mae,
        "rmse": rmse,
        "rse": rse,
        "mape": mape,
        "mape_excluded": excluded,
    }


def repeat_last(inputs: np.ndarray, horizon: int) -> np.ndarray:
    """Hold the final observed value flat across the horizon. [M, N, L] -> [M, N, F]."""
    last = inputs[..., -1:]
    return np.repeat(last, horizon, axis=-1)


def window_mean(inputs: np.ndarray, horizon: int) -> np.ndarray:
    """Predict the per-window per-variate mean of the lookback. [M, N, L] -> [M, N, F]."""
    mean = inputs.mean(axis=-1, keepdims=True)
    return np.repeat(mean, horizon, axis=-1)
