"""Complexity benchmark: exact operation counts (primary evidence) plus
wall-clock medians (secondary, noisy) over a grid of token counts, with a
least-squares log-log growth exponent fitted to the counts."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass

import numpy as np

from .attention import count_ops, dot_core, mha_core
from .engine import DiffArray
from .errors import ConfigError
from .ioutil import atomic_write_text

BENCH_MECHANISMS = ("dot", "multihead")
MIN_GRID_POINTS = 3
MIN_GRID_SPAN = 8.0
MIN_REPS = 5


@dataclass(frozen=True)
class BenchPoint:
    L_tok: int
    op_count: int
    wall_median: float


@dataclass(frozen=True)
class BenchResult:
    """One mechanism's measured growth over the token grid."""

    mechanism: str
    D: int
    reps: int
    points: tuple[BenchPoint, ...]
    slope: float  # log-log least squares over op counts

    def to_dict(self) -> dict:
        return {
            "mechanism": self.mechanism,
            "D": self.D,
            "reps": self.reps,
            "grid": [
                {"L_tok": p.L_tok, "op_count": p.op_count, "wall_median": p.wall_median}
                for p in self.points
            ],
            "slope": self.slope,
        }


def _validate_grid(grid: list[int]) -> list[int]:
    if len(grid) < MIN_GRID_POINTS:
        raise ConfigError(f"benchmark grid needs at least {MIN_GRID_POINTS} points, got {grid}")
    if any(l <= 1 for l in grid):
        raise ConfigError(f"token counts must exceed 1, got {grid}")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ConfigError(f"grid must be strictly increasing, got {grid}")
    if grid[-1] / grid[0] < MIN_GRID_SPAN:
        raise ConfigError(
            f"grid must span at least {MIN_GRID_SPAN:g}x, got {grid[0]}..{grid[-1]}"
        )
    return grid


def _time_core(mechanism: str, L: int, D: int, heads: int, reps: int) -> float:
    rng = np.random.default_rng(L)  # fixed inputs per grid point
    q = DiffArray(rng.normal(size=(L, D)))
    k = DiffArray(rng.normal(size=(L, D)))
    v = DiffArray(rng.normal(size=(L, D)))
    if mechanism == "multihead":
        q, k, v = (DiffArray(x.data[None]) for x in (q, k, v))
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        if mechanism == "dot":
            dot_core(q, k, v)
        else:
            mha_core(q, k, v, heads)
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def fit_loglog_slope(xs, ys) -> float:
    """Least-squares slope of log(y) against log(x)."""
    lx = np.log(np.asarray(xs, dtype=np.float64))
    ly = np.log(np.asarray(ys, dtype=np.float64))
    design = np.stack([lx, np.ones_like(lx)], axis=1)
    coef, *_ = np.linalg.lstsq(design, ly, rcond=None)
    return float(coef[0])


def run_bench(
    mechanisms: list[str],
    grid: list[int],
    D: int = 64,
    reps: int = MIN_REPS,
    heads: int = 8,
) -> list[BenchResult]:
    """Measure each mechanism's attention core over the token grid."""
    grid = _validate_grid(list(grid))
    if reps < MIN_REPS:
        raise ConfigError(f"wall-time medians need at least {MIN_REPS} reps, got {reps}")
    for mech in mechanisms:
        if mech not in BENCH_MECHANISMS:
            raise ConfigError(f"mechanism {mech!r} not in {BENCH_MECHANISMS}")
    if D < 1 or D % heads:
        raise ConfigError(f"D={D} must be positive and divisible by heads={heads}")
    results = []
    for mech in mechanisms:
        points = []
        for L in grid:
            ops = count_ops(mech, L, D, heads=heads)
            wall = _time_core(mech, L, D, heads, reps)
            points.append(BenchPoint(L_tok=L, op_count=ops, wall_median=wall))
        slope = fit_loglog_slope([p.L_tok for p in points], [p.op_count for p in points])
        results.append(
            BenchResult(mechanism=mech, D=D, reps=reps, points=tuple(points), slope=slope)
        )
    return results


def save_bench(results: list[BenchResult], path: str) -> None:
    atomic_write_text(path, json.dumps([r.to_dict() for r in results], sort_keys=True, indent=1))
