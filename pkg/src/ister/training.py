"""Optimization loop: Adam, L2 loss, seeded mini-batches, early stopping.

The loss is always computed on denormalized predictions against raw
targets, so reported numbers live on the same scale as the input windows.
Runs are deterministic for a fixed seed: batch order, dropout masks, and
optimizer state all derive from it.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, replace

import numpy as np

from . import kernels
from .data import SeriesTable, SplitSpec, TimeWindow, chronological_split, windows
from .engine import DiffArray, Tape, reduce_sum
from .errors import ConfigError, NumericError, ShapeError
from .ioutil import atomic_write_text
from .model import IsterModel, PreparedWindow

LR_SCHEDULES = ("constant", "halve-per-epoch")
DEFAULT_BETAS = (0.9, 0.999)
DEFAULT_ADAM_EPS = 1e-8


# -- metrics -------------------------------------------------------------------


def mse(pred, target) -> float:
    """Mean squared error over every element; shapes must match."""
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if p.shape != t.shape:
        raise ShapeError(f"mse needs equal shapes, got {p.shape} and {t.shape}")
    return float(np.mean((p - t) ** 2))


def mae(pred, target) -> float:
    """Mean absolute error over every element; shapes must match."""
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if p.shape != t.shape:
        raise ShapeError(f"mae needs equal shapes, got {p.shape} and {t.shape}")
    return float(np.mean(np.abs(p - t)))


# -- optimizer -------------------------------------------------------------------


@dataclass
class AdamState:
    """First/second moment buffers plus the shared step counter."""

    step: int
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]

    @classmethod
    def init(cls, params: dict[str, DiffArray]) -> "AdamState":
        return cls(
            step=0,
            m={name: np.zeros_like(p.data) for name, p in params.items()},
            v={name: np.zeros_like(p.data) for name, p in params.items()},
        )


def adam_step(
    params: dict[str, DiffArray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float,
    betas: tuple[float, float] = DEFAULT_BETAS,
    eps: float = DEFAULT_ADAM_EPS,
) -> AdamState:
    """One bias-corrected Adam update, in place on every parameter tensor.

    A missing gradient entry counts as zero (the tensor keeps its value
    but the moments still decay). Non-finite gradients abort loudly.
    """
    state.step += 1
    beta1, beta2 = betas
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        g = np.asarray(g, dtype=np.float64)
        if g.shape != p.shape:
            raise ShapeError(f"gradient for {name!r} has shape {g.shape}, parameter {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter {name!r}")
        kernels.adam_update(p.data, g, state.m[name], state.v[name], state.step, lr, beta1, beta2, eps)
    return state


# -- configuration and reporting ------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    """Knobs of the optimization loop; the loss itself is fixed to L2."""

    learning_rate: float = 1e-4
    batch_size: int = 32
    max_epochs: int = 10
    patience: int = 3
    seed: int = 0
    lr_schedule: str = "constant"
    betas: tuple[float, float] = DEFAULT_BETAS
    adam_eps: float = DEFAULT_ADAM_EPS

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError(f"learning rate must be positive, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ConfigError(f"batch size must be at least 1, got {self.batch_size}")
        if self.max_epochs < 1:
            raise ConfigError(f"max epochs must be at least 1, got {self.max_epochs}")
        if self.patience < 0:
            raise ConfigError(f"patience must be nonnegative, got {self.patience}")
        if self.lr_schedule not in LR_SCHEDULES:
            raise ConfigError(f"lr schedule {self.lr_schedule!r} not in {LR_SCHEDULES}")


@dataclass
class TrainReport:
    """What one training run did, JSON-serializable for artifacts."""

    train_loss: list[float]
    val_loss: list[float]
    best_epoch: int
    test_mse: float
    test_mae: float
    wall_time: float
    seed: int

    def to_dict(self) -> dict:
        return {
            "train_loss": self.train_loss,
            "val_loss": self.val_loss,
            "best_epoch": self.best_epoch,
            "test_mse": self.test_mse,
            "test_mae": self.test_mae,
            "wall_time": self.wall_time,
            "seed": self.seed,
        }

    def save(self, path: str) -> None:
        atomic_write_text(path, json.dumps(self.to_dict(), sort_keys=True, indent=1))


# -- dataset plumbing -----------------------------------------------------------


@dataclass(frozen=True)
class DatasetScaling:
    """Dataset-level z-scoring fit on the train split only."""

    mean: np.ndarray  # [N]
    sd: np.ndarray  # [N], zero-variance channels pinned to 1

    def apply(self, values: np.ndarray) -> np.ndarray:
        return (values - self.mean) / self.sd

    def invert(self, values: np.ndarray) -> np.ndarray:
        return values * self.sd + self.mean

    @classmethod
    def fit(cls, values: np.ndarray) -> "DatasetScaling":
        mean = values.mean(axis=0)
        sd = values.std(axis=0)
        sd = np.where(sd > 0.0, sd, 1.0)
        return cls(mean=mean, sd=sd)


@dataclass(frozen=True)
class SplitWindows:
    """Windowed train/val/test segments, all on one scale."""

    train: list[TimeWindow]
    val: list[TimeWindow]
    test: list[TimeWindow]

    def __post_init__(self):
        for label, part in (("train", self.train), ("val", self.val), ("test", self.test)):
            if not part:
                raise ShapeError(f"{label} split produced no windows")


def prepare_splits(
    table: SeriesTable,
    spec: SplitSpec,
    T: int,
    S: int,
    train_stride: int = 1,
    eval_stride: int | None = None,
    zscore: bool = True,
) -> tuple[SplitWindows, DatasetScaling | None]:
    """Chronological split, optional train-statistics z-scoring, windowing.

    Evaluation windows default to stride S (non-overlapping horizons);
    training windows default to stride 1.
    """
    train_t, val_t, test_t = chronological_split(table, spec)
    scaling = None
    if zscore:
        scaling = DatasetScaling.fit(train_t.values)
        train_t, val_t, test_t = (
            SeriesTable(
                name=part.name,
                values=scaling.apply(part.values),
                channel_names=part.channel_names,
                frequency=part.frequency,
                timestamps=part.timestamps,
            )
            for part in (train_t, val_t, test_t)
        )
    if eval_stride is None:
        eval_stride = S
    split = SplitWindows(
        train=windows(train_t, T, S, stride=train_stride),
        val=windows(val_t, T, S, stride=eval_stride),
        test=windows(test_t, T, S, stride=eval_stride),
    )
    return split, scaling


# -- evaluation ------------------------------------------------------------------

_EVAL_CHUNK = 128  # windows per batched forward; bounds peak memory


def _group_by_plan(items: list[tuple[PreparedWindow, np.ndarray]]):
    """Deterministically ordered groups of (prepared, target) by plan."""
    groups: dict[tuple, list[tuple[PreparedWindow, np.ndarray]]] = {}
    for item in items:
        groups.setdefault(item[0].plan.signature(), []).append(item)
    return [groups[sig] for sig in sorted(groups)]


def _predict_batched(model: IsterModel, prepared_targets) -> tuple[np.ndarray, np.ndarray]:
    """Forward every window (eval graph-free), returning stacked pred/target."""
    preds, targets = [], []
    for group in _group_by_plan(prepared_targets):
        for start in range(0, len(group), _EVAL_CHUNK):
            chunk = group[start : start + _EVAL_CHUNK]
            out, _ = model.forward_prepared([c[0] for c in chunk])
            preds.append(out.data)
            targets.append(np.stack([c[1] for c in chunk]))
    return np.concatenate(preds, axis=0), np.concatenate(targets, axis=0)


def evaluate(model: IsterModel, eval_windows: list[TimeWindow]) -> tuple[float, float]:
    """(MSE, MAE) over a window list, dropout off, denormalized scale."""
    if not eval_windows:
        raise ShapeError("evaluate needs at least one window")
    was_training = model.training
    model.training = False
    try:
        items = [(model.prepare_window(w.lookback), np.asarray(w.horizon, dtype=np.float64)) for w in eval_windows]
        pred, target = _predict_batched(model, items)
    finally:
        model.training = was_training
    return mse(pred, target), mae(pred, target)


# -- training loop ----------------------------------------------------------------


def _train_step(
    model: IsterModel,
    batch: list[tuple[PreparedWindow, np.ndarray]],
    params: dict[str, DiffArray],
    state: AdamState,
    lr: float,
    tc: TrainConfig,
) -> float:
    """One optimizer step on one mini-batch; returns the batch loss."""
    total_elements = sum(t.size for _, t in batch)
    with Tape() as tape:
        loss = None
        for group in _group_by_plan(batch):
            out, _ = model.forward_prepared([g[0] for g in group])
            diff = out - DiffArray(np.stack([g[1] for g in group]))
            sse = reduce_sum(diff * diff)
            loss = sse if loss is None else loss + sse
        loss = loss * (1.0 / total_elements)
    tape.backward(loss)
    grads = {name: p.grad for name, p in params.items()}
    adam_step(params, grads, state, lr, tc.betas, tc.adam_eps)
    model.zero_grads()
    return loss.item()


def train(
    model: IsterModel, datasets: SplitWindows, tc: TrainConfig
) -> tuple[IsterModel, TrainReport]:
    """Fit the model; returns it restored to its best-validation state.

    Per epoch: seeded shuffled mini-batches, then validation MSE on
    denormalized predictions. Stops early once the count of consecutive
    non-improving epochs exceeds ``patience`` (patience 0 stops at the
    first non-improving epoch). Deterministic given the seed.
    """
    t0 = time.perf_counter()
    cfg = model.config
    for label, part in (("train", datasets.train), ("val", datasets.val), ("test", datasets.test)):
        for w in part:
            if w.lookback.shape != (cfg.T, cfg.N) or w.horizon.shape != (cfg.S, cfg.N):
                raise ShapeError(
                    f"{label} window shapes {w.lookback.shape}/{w.horizon.shape} do not match "
                    f"model [T={cfg.T}, S={cfg.S}, N={cfg.N}]"
                )

    rng = np.random.default_rng(tc.seed)
    model.set_training(True, seed=tc.seed)
    train_items = [
        (model.prepare_window(w.lookback), np.asarray(w.horizon, dtype=np.float64))
        for w in datasets.train
    ]
    params = model.parameters()
    state = AdamState.init(params)

    train_hist: list[float] = []
    val_hist: list[float] = []
    best_val = np.inf
    best_epoch = -1
    best_snap = model.snapshot()
    bad = 0

    try:
        for epoch in range(tc.max_epochs):
            lr = tc.learning_rate
            if tc.lr_schedule == "halve-per-epoch":
                lr = tc.learning_rate * (0.5**epoch)
            order = rng.permutation(len(train_items))
            weighted = 0.0
            elements = 0
            for start in range(0, len(order), tc.batch_size):
                batch = [train_items[i] for i in order[start : start + tc.batch_size]]
                n = sum(t.size for _, t in batch)
                loss_value = _train_step(model, batch, params, state, lr, tc)
                weighted += loss_value * n
                elements += n
            train_hist.append(weighted / elements)

            val_mse, _ = evaluate(model, datasets.val)
            if not np.isfinite(val_mse):
                raise NumericError(f"validation loss diverged at epoch {epoch}")
            val_hist.append(val_mse)

            if val_mse < best_val:
                best_val = val_mse
                best_epoch = epoch
                best_snap = model.snapshot()
                bad = 0
            else:
                bad += 1
                if bad > tc.patience:
                    break
    finally:
        model.set_training(False)

    model.restore(best_snap)
    test_mse, test_mae = evaluate(model, datasets.test)
    report = TrainReport(
        train_loss=train_hist,
        val_loss=val_hist,
        best_epoch=best_epoch,
        test_mse=test_mse,
        test_mae=test_mae,
        wall_time=time.perf_counter() - t0,
        seed=tc.seed,
    )
    return model, report


def seed_study(
    config, datasets: SplitWindows, tc: TrainConfig, seeds=(0, 1, 2, 3, 4)
) -> dict:
    """Train one fresh model per seed and aggregate the test metrics.

    Both the parameter initialization and the batch shuffling take the
    study seed, so each run is independently reproducible. Returns per-run
    metrics plus their mean and sample standard deviation (ddof=1; 0.0
    for a single seed).
    """
    if len(seeds) == 0:
        raise ConfigError("seed_study needs at least one seed")
    runs = []
    for seed in seeds:
        model = IsterModel(config, seed=seed)
        _, report = train(model, datasets, replace(tc, seed=int(seed)))
        runs.append(
            {
                "seed": int(seed),
                "best_epoch": report.best_epoch,
                "test_mse": report.test_mse,
                "test_mae": report.test_mae,
            }
        )
    summary = {}
    for key in ("test_mse", "test_mae"):
        vals = np.array([r[key] for r in runs])
        sd = float(vals.std(ddof=1)) if len(vals) > 1 else 0.0
        summary[key] = {"mean": float(vals.mean()), "sd": sd}
    return {"seeds": [int(s) for s in seeds], "runs": runs, "summary": summary}
