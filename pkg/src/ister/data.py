"""Dataset ingestion, chronological splitting, windowing, and synthesis."""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass

import numpy as np

from .errors import DataError

DEFAULT_FRACTIONS = (0.7, 0.1, 0.2)


@dataclass
class SeriesTable:
    """A named multivariate series, [timesteps, channels], no gaps."""

    name: str
    values: np.ndarray
    channel_names: list[str]
    frequency: str | None = None
    timestamps: list[str] | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise DataError(f"series values must be 2-D, got shape {self.values.shape}")
        if len(self.channel_names) != self.values.shape[1]:
            raise DataError(
                f"{len(self.channel_names)} channel names for {self.values.shape[1]} channels"
            )
        if not np.all(np.isfinite(self.values)):
            raise DataError(f"series {self.name!r} contains missing or non-finite values")

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def n_channels(self) -> int:
        return self.values.shape[1]

    def slice_rows(self, start: int, stop: int, suffix: str) -> "SeriesTable":
        return SeriesTable(
            name=f"{self.name}/{suffix}",
            values=self.values[start:stop],
            channel_names=list(self.channel_names),
            frequency=self.frequency,
            timestamps=self.timestamps[start:stop] if self.timestamps else None,
        )


@dataclass(frozen=True)
class TimeWindow:
    """One lookback/horizon pair; the unit of training and inference."""

    lookback: np.ndarray  # [T, N]
    horizon: np.ndarray  # [S, N]
    origin_index: int  # offset of the lookback start in the parent table


@dataclass(frozen=True)
class SplitSpec:
    """Chronological train/val/test split, by fractions or explicit counts."""

    fractions: tuple[float, float, float] | None = DEFAULT_FRACTIONS
    counts: tuple[int, int, int] | None = None
    chronological: bool = True

    def __post_init__(self):
        if not self.chronological:
            raise DataError("splits are always chronological")
        if (self.fractions is None) == (self.counts is None):
            raise DataError("give exactly one of fractions or counts")
        if self.fractions is not None:
            if any(f < 0 for f in self.fractions) or not math.isclose(
                sum(self.fractions), 1.0, abs_tol=1e-9
            ):
                raise DataError(f"fractions must be nonnegative and sum to 1, got {self.fractions}")
        if self.counts is not None and any(c <= 0 for c in self.counts):
            raise DataError(f"split counts must be positive, got {self.counts}")


def load_csv(
    path,
    has_header: bool = True,
    timestamp_column: str | None = None,
    name: str | None = None,
    frequency: str | None = None,
) -> SeriesTable:
    """Read a comma-separated series: rows are timesteps, columns channels.

    The optional timestamp column is dropped from the numeric values but
    kept as metadata. Any missing, non-numeric, or NaN cell is an error
    naming its row and column; imputation is out of scope.
    """
    path = str(path)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open dataset {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        rows = [row for row in reader if row]
    if not rows:
        raise DataError(f"dataset {path} is empty")

    if has_header:
        header, data_rows = rows[0], rows[1:]
        first_data_row = 2  # 1-based file line of the first data row
    else:
        header = [f"c{i}" for i in range(len(rows[0]))]
        data_rows = rows
        first_data_row = 1
    if not data_rows:
        raise DataError(f"dataset {path} has a header but no data rows")

    ts_idx = None
    if timestamp_column is not None:
        if timestamp_column not in header:
            raise DataError(f"timestamp column {timestamp_column!r} not in header {header}")
        ts_idx = header.index(timestamp_column)

    width = len(header)
    channel_names = [h for i, h in enumerate(header) if i != ts_idx]
    values = np.empty((len(data_rows), len(channel_names)), dtype=np.float64)
    timestamps: list[str] | None = [] if ts_idx is not None else None
    for r, row in enumerate(data_rows):
        if len(row) != width:
            raise DataError(
                f"{path} line {first_data_row + r}: expected {width} columns, got {len(row)}"
            )
        c_out = 0
        for c, cell in enumerate(row):
            if c == ts_idx:
                timestamps.append(cell)
                continue
            try:
                v = float(cell)
            except ValueError:
                raise DataError(
                    f"{path} line {first_data_row + r}, column {header[c]!r}: "
                    f"cannot parse {cell!r} as a number"
                ) from None
            if not math.isfinite(v):
                raise DataError(
                    f"{path} line {first_data_row + r}, column {header[c]!r}: "
                    f"missing/non-finite value {cell!r}"
                )
            values[r, c_out] = v
            c_out += 1

    return SeriesTable(
        name=name or os.path.splitext(os.path.basename(path))[0],
        values=values,
        channel_names=channel_names,
        frequency=frequency,
        timestamps=timestamps,
    )


def chronological_split(
    table: SeriesTable, spec: SplitSpec = SplitSpec()
) -> tuple[SeriesTable, SeriesTable, SeriesTable]:
    """Cut the table into contiguous, ordered, non-overlapping segments.

    Rows are never shared between segments, so no window can straddle a
    boundary and later splits cannot leak into earlier ones.
    """
    total = len(table)
    if spec.counts is not None:
        n_train, n_val, n_test = spec.counts
        needed = n_train + n_val + n_test
        if needed > total:
            raise DataError(
                f"split counts need at least {needed} rows, table {table.name!r} has {total}"
            )
    else:
        f_train, f_val, _ = spec.fractions
        n_train = int(total * f_train)
        n_val = int(total * f_val)
        n_test = total - n_train - n_val
    for label, n in (("train", n_train), ("val", n_val), ("test", n_test)):
        if n <= 0:
            raise DataError(f"split leaves the {label} segment empty ({total} rows)")
    train = table.slice_rows(0, n_train, "train")
    val = table.slice_rows(n_train, n_train + n_val, "val")
    test = table.slice_rows(n_train + n_val, n_train + n_val + n_test, "test")
    return train, val, test


def windows(table: SeriesTable, T: int, S: int, stride: int = 1) -> list[TimeWindow]:
    """All lookback/horizon pairs of the table, oldest first.

    Yields floor((len - T - S)/stride) + 1 windows; the first horizon
    starts at index T.
    """
    if T <= 0 or S <= 0:
        raise DataError(f"window lengths must be positive, got T={T}, S={S}")
    if stride <= 0:
        raise DataError(f"stride must be positive, got {stride}")
    total = len(table)
    if total < T + S:
        raise DataError(
            f"table {table.name!r} has {total} rows; windowing needs at least T+S={T + S}"
        )
    out = []
    for start in range(0, total - T - S + 1, stride):
        out.append(
            TimeWindow(
                lookback=table.values[start : start + T],
                horizon=table.values[start + T : start + T + S],
                origin_index=start,
            )
        )
    return out


def synth_multiperiodic(
    total: int,
    n_channels: int,
    periods: list[float],
    amplitudes: list[float],
    noise_sd: float = 0.0,
    trend_slope: float = 0.0,
    seed: int = 0,
    name: str = "synthetic",
) -> SeriesTable:
    """Generate channels of summed sinusoids + linear trend + gaussian noise.

    Each channel gets its own per-period phases (drawn from the seeded
    generator), so channels are distinct but share the period structure.
    Sine arguments are computed modulo the period, which keeps noiseless
    series exactly periodic even for long horizons.
    """
    if len(periods) != len(amplitudes):
        raise DataError("periods and amplitudes must have equal length")
    if any(p <= 0 for p in periods):
        raise DataError(f"periods must be positive, got {periods}")
    if total <= 0 or n_channels <= 0:
        raise DataError("total and n_channels must be positive")
    rng = np.random.default_rng(seed)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=(n_channels, len(periods)))
    t = np.arange(total, dtype=np.float64)[:, None]  # [total, 1]
    values = np.zeros((total, n_channels), dtype=np.float64)
    for j, (p, a) in enumerate(zip(periods, amplitudes)):
        values += a * np.sin(2.0 * np.pi * (t % p) / p + phases[:, j])
    values += trend_slope * t
    if noise_sd > 0.0:
        values += rng.normal(0.0, noise_sd, size=values.shape)
    return SeriesTable(
        name=name,
        values=values,
        channel_names=[f"ch{i}" for i in range(n_channels)],
    )
