"""Instance normalization and moving-average seasonal-trend decomposition.

Both transforms run in plain numpy before any gradient tape: they have no
trainable parameters, and keeping them outside the graph keeps tapes small.
The normalization statistics are carried forward so model outputs can be
mapped back to the original scale exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DataError, NumericError, ShapeError

DEFAULT_EPSILON = 1e-5
DEFAULT_DECOMP_KERNEL = 25


@dataclass(frozen=True)
class NormStats:
    """Per-channel statistics of one instance (one lookback window)."""

    mean: np.ndarray  # [N]
    sd: np.ndarray  # [N], population (biased) standard deviation
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self):
        if np.any(self.sd + self.epsilon <= 0.0):
            raise ValueError("sd + epsilon must be positive for every channel")

    @property
    def n_channels(self) -> int:
        return self.mean.shape[0]


@dataclass(frozen=True)
class DecompPair:
    """Seasonal and trend parts; their sum reconstructs the input."""

    seasonal: np.ndarray  # [T, N]
    trend: np.ndarray  # [T, N]


def _as_series(x, what: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"{what} must be 2-D [timesteps, channels], got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"{what} contains non-finite values")
    return arr


def instance_normalize(x) -> tuple[np.ndarray, NormStats]:
    """Standardize each channel of one window to mean 0, sd 1.

    Uses the population standard deviation with an epsilon guard, so a
    constant channel maps to all zeros rather than NaN. Statistics are fit
    on this window alone.
    """
    arr = _as_series(x, "instance_normalize input")
    if arr.shape[0] < 2:
        raise DataError(f"instance normalization needs at least 2 timesteps, got {arr.shape[0]}")
    mean = arr.mean(axis=0)
    sd = arr.std(axis=0)  # population, ddof=0
    stats = NormStats(mean=mean, sd=sd)
    return (arr - mean) / (sd + stats.epsilon), stats


def denormalize(y, stats: NormStats) -> np.ndarray:
    """Exact inverse of instance_normalize, applied to model output."""
    arr = np.asarray(y, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != stats.n_channels:
        raise ShapeError(
            f"denormalize channel mismatch: output has shape {arr.shape}, "
            f"stats cover {stats.n_channels} channels"
        )
    return arr * (stats.sd + stats.epsilon) + stats.mean


def series_decomp(x, kernel: int = DEFAULT_DECOMP_KERNEL) -> DecompPair:
    """Split a series into trend (centered moving average) and seasonal rest.

    The average window is replicate-padded at both ends so the trend keeps
    the input length; seasonal = x - trend, which makes reconstruction
    exact by construction.
    """
    arr = _as_series(x, "series_decomp input")
    t_len = arr.shape[0]
    if kernel % 2 == 0:
        raise ValueError(f"decomposition kernel must be odd, got {kernel}")
    if not 1 <= kernel <= 2 * t_len - 1:
        raise ValueError(f"decomposition kernel must be in [1, {2 * t_len - 1}], got {kernel}")
    trend = kernels.moving_average_replicate(arr, kernel)
    return DecompPair(seasonal=arr - trend, trend=trend)
