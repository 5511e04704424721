"""Reference predictors used as sanity floors for the learned model.

All three are deliberately simple: if the model cannot beat persistence
and the lookback mean on learnable data, something upstream is broken.
"""

from __future__ import annotations

import numpy as np

from .data import TimeWindow
from .errors import ShapeError
from .training import mae, mse


def persistence(lookback: np.ndarray, S: int) -> np.ndarray:
    """Repeat the last observed row for every horizon step."""
    x = np.asarray(lookback, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"lookback must be [T, N], got shape {x.shape}")
    return np.tile(x[-1:], (S, 1))


def lookback_mean(lookback: np.ndarray, S: int) -> np.ndarray:
    """Predict each channel's lookback average for every horizon step."""
    x = np.asarray(lookback, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"lookback must be [T, N], got shape {x.shape}")
    return np.tile(x.mean(axis=0, keepdims=True), (S, 1))


class LinearBaseline:
    """One least-squares T -> S linear map (with intercept), shared by all
    channels: each (window, channel) pair is a regression sample."""

    def __init__(self):
        self.weights: np.ndarray | None = None  # [T+1, S], last row is the intercept

    def fit(self, train_windows: list[TimeWindow]) -> "LinearBaseline":
        if not train_windows:
            raise ShapeError("linear baseline needs at least one training window")
        xs = np.concatenate([w.lookback.T for w in train_windows], axis=0)  # [n*N, T]
        ys = np.concatenate([w.horizon.T for w in train_windows], axis=0)  # [n*N, S]
        design = np.concatenate([xs, np.ones((xs.shape[0], 1))], axis=1)
        self.weights, *_ = np.linalg.lstsq(design, ys, rcond=None)
        return self

    def predict(self, lookback: np.ndarray) -> np.ndarray:
        if self.weights is None:
            raise ShapeError("linear baseline is not fitted")
        x = np.asarray(lookback, dtype=np.float64)
        T = self.weights.shape[0] - 1
        if x.ndim != 2 or x.shape[0] != T:
            raise ShapeError(f"lookback must be [{T}, N], got shape {x.shape}")
        design = np.concatenate([x.T, np.ones((x.shape[1], 1))], axis=1)  # [N, T+1]
        return (design @ self.weights).T  # [S, N]


def baseline_metrics(eval_windows: list[TimeWindow], predict) -> tuple[float, float]:
    """(MSE, MAE) of ``predict(lookback) -> [S, N]`` over a window list."""
    if not eval_windows:
        raise ShapeError("baseline evaluation needs at least one window")
    preds = np.stack([predict(w.lookback) for w in eval_windows])
    targets = np.stack([w.horizon for w in eval_windows])
    return mse(preds, targets), mae(preds, targets)
