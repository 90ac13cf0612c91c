"""Deterministic synthetic series for smoke tests and the verification suite."""

from __future__ import annotations

from pathlib import Path

import numpy as np


def sine_mixture(length: int, num_variates: int = 2, periods=(24, 96),
                 noise: float = 0.1, seed: int = 2024) -> np.ndarray:
    """Per-variate sums of fixed-period sinusoids with additive Gaussian noise."""
    rng = np.random.default_rng(seed)
    t = np.arange(length, dtype=np.float64)
    out = np.zeros((length, num_variates))
    for v in range(num_variates):
        series = np.zeros(length)
        for period in periods:
            amplitude = rng.uniform(0.5, 1.5)
            phase = rng.uniform(0.0, 2.0 * np.pi)
            series += amplitude * np.sin(2.0 * np.pi * t / period + phase)
        series += noise * rng.standard_normal(length)
        out[:, v] = series
    return out


def linear_trend(length: int, num_variates: int = 2, noise: float = 0.1,
                 seed: int = 2024) -> np.ndarray:
    """Per-variate affine ramps with additive Gaussian noise."""
    rng = np.random.default_rng(seed)
    t = np.arange(length, dtype=np.float64)
    out = np.zeros((length, num_variates))
    for v in range(num_variates):
        slope = rng.uniform(-0.02, 0.02)
        intercept = rng.uniform(-1.0, 1.0)
        out[:, v] = intercept + slope * t + noise * rng.standard_normal(length)
    return out


def write_series_csv(path, values: np.ndarray, column_prefix: str = "v") -> None:
    """Write [time, N] values as timestamp-plus-variates CSV."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = [f"{column_prefix}{i}" for i in range(values.shape[1])]
    with open(path, "w") as fh:
        fh.write("timestamp," + ",".join(names) + "\n")
        for i, row in enumerate(values):
            fh.write(str(i) + "," + ",".join(repr(float(x)) for x in row) + "\n")
