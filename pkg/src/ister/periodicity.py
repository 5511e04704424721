"""Frequency-domain period discovery and subsequence splitting.

Pipeline: amplitude_spectrum finds the per-frequency energy of a window
(averaged over channels, DC excluded), topk_periods turns the strongest
frequencies into a concrete subsequence layout, and split_and_pad cuts the
series into period-length components zero-padded to the full length.

The DFT is computed in-house: an iterative radix-2 FFT when the window
length is a power of two, a cached-matrix direct transform otherwise.
Window lengths stay in the hundreds, so the O(T^2) fallback is cheap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DataError, NumericError, ShapeError


@dataclass(frozen=True)
class Spectrum:
    """Channel-averaged amplitude per integer frequency 1 .. T//2."""

    amplitudes: np.ndarray  # [T//2]; index i holds frequency i+1

    def __post_init__(self):
        if np.any(self.amplitudes < 0.0):
            raise ValueError("amplitudes must be nonnegative")

    def __len__(self) -> int:
        return self.amplitudes.shape[0]

    def at(self, freq: int) -> float:
        """Amplitude of integer frequency ``freq`` (1-based, DC excluded)."""
        if not 1 <= freq <= len(self):
            raise IndexError(f"frequency {freq} outside 1..{len(self)}")
        return float(self.amplitudes[freq - 1])


@dataclass(frozen=True)
class ComponentSlot:
    """One subsequence: slot ``slot`` of the period at ``period_index``."""

    period_index: int
    slot: int  # 0-based position within its period's split
    start: int  # first timestep covered
    length: int  # timesteps covered (< period only for the final slot)


@dataclass(frozen=True)
class PeriodPlan:
    """Top-k frequencies with the derived subsequence layout.

    ``layout`` is period-major, slot-minor and is the canonical component
    order everywhere downstream (embedding, token axes, reports).
    """

    T: int
    freqs: tuple[int, ...]  # deduplicated, k' <= k
    periods: tuple[int, ...]  # ceil(T / f), distinct
    counts: tuple[int, ...]  # ceil(T / p) slots per period
    P: int  # total component count, sum(counts)
    layout: tuple[ComponentSlot, ...]

    def signature(self) -> tuple:
        """Identity of the component layout; equal signatures mean equal layouts."""
        return (self.T, self.periods)

    def component_label(self, index: int) -> str:
        """Label of component ``index`` as period(slot), slot 1-based."""
        slot = self.layout[index]
        return f"{self.periods[slot.period_index]}({slot.slot + 1})"


def _bit_reverse_indices(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n, dtype=np.int64)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


def _fft_radix2(x: np.ndarray) -> np.ndarray:
    """Iterative Cooley-Tukey DFT along axis 0; length must be a power of two."""
    n = x.shape[0]
    a = x[_bit_reverse_indices(n)].astype(np.complex128)
    size = 2
    while size <= n:
        half = size // 2
        w = np.exp(-2j * np.pi * np.arange(half) / size)[None, :, None]
        a = a.reshape(-1, size, a.shape[-1])
        even, odd = a[:, :half, :], a[:, half:, :] * w
        a = np.concatenate([even + odd, even - odd], axis=1)
        a = a.reshape(-1, a.shape[-1])
        size *= 2
    return a


@lru_cache(maxsize=8)
def _dft_matrix(n: int) -> np.ndarray:
    t = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(t, t) / n)


def _dft(x: np.ndarray) -> np.ndarray:
    """DFT along axis 0 of a real [T, N] array."""
    n = x.shape[0]
    if n >= 2 and n & (n - 1) == 0:
        return _fft_radix2(x)
    return _dft_matrix(n) @ x


def amplitude_spectrum(x) -> Spectrum:
    """Channel-mean DFT amplitudes at integer frequencies 1 .. T//2."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"amplitude_spectrum expects [T, N], got shape {arr.shape}")
    if arr.shape[0] < 4:
        raise DataError(f"spectrum needs at least 4 timesteps, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise NumericError("amplitude_spectrum input contains non-finite values")
    coeffs = _dft(arr)
    half = arr.shape[0] // 2
    return Spectrum(amplitudes=np.abs(coeffs[1 : half + 1]).mean(axis=1))


def topk_periods(spectrum: Spectrum, k: int, T: int) -> PeriodPlan:
    """Select the k strongest frequencies and lay out their subsequences.

    Ties break toward the lower frequency (longer period). Frequencies
    whose periods collide after the ceiling are deduplicated, so the plan
    may carry fewer than k periods.
    """
    half = len(spectrum)
    if T // 2 != half:
        raise ShapeError(f"spectrum has {half} bins but T={T} implies {T // 2}")
    if not 1 <= k <= half:
        raise ValueError(f"k must be in 1..{half}, got {k}")
    amps = spectrum.amplitudes
    freqs_all = np.arange(1, half + 1)
    order = np.lexsort((freqs_all, -amps))  # amplitude desc, frequency asc on ties
    chosen: list[int] = []
    periods: list[int] = []
    for idx in order[:k]:
        f = int(freqs_all[idx])
        p = math.ceil(T / f)
        if p not in periods:
            chosen.append(f)
            periods.append(p)
    counts = [math.ceil(T / p) for p in periods]
    layout: list[ComponentSlot] = []
    for i, (p, c) in enumerate(zip(periods, counts)):
        for j in range(c):
            start = j * p
            layout.append(ComponentSlot(i, j, start, min(p, T - start)))
    return PeriodPlan(
        T=T,
        freqs=tuple(chosen),
        periods=tuple(periods),
        counts=tuple(counts),
        P=sum(counts),
        layout=tuple(layout),
    )


def split_and_pad(x, plan: PeriodPlan) -> np.ndarray:
    """Stack the plan's components as [P, T, N], each zero-padded to T.

    Component (i, j) carries x[j*p_i : j*p_i + length] in its leading rows.
    """
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] != plan.T:
        raise ShapeError(f"split_and_pad input shape {arr.shape} does not match plan T={plan.T}")
    out = np.zeros((plan.P, plan.T, arr.shape[1]), dtype=np.float64)
    for c, slot in enumerate(plan.layout):
        out[c, : slot.length, :] = arr[slot.start : slot.start + slot.length, :]
    return out
