"""Contribution readouts: which channels and which periodic components the
trained model attends to, plus JSON/CSV/SVG export of those scores.

Scores come straight from the Query-softmax weights captured during a
forward pass: mean over the feature axis of each token distribution, then
averaged over windows (and, for the periodic branch, over channels).
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .data import TimeWindow
from .errors import ConfigError, DataError, ShapeError
from .ioutil import atomic_write_text
from .model import IsterModel, PreparedWindow

EXPORT_FORMATS = ("json", "csv", "svg-bar")
BRANCHES = ("both", "channel", "period")

_SUM_TOL = 1e-5


@dataclass
class ContributionReport:
    """Aggregated attention scores for one plan group of windows.

    Either section may be absent (None) when only one branch was queried.
    Score vectors are probability distributions; ranges are [start, end)
    timestep spans into the lookback window.
    """

    layer_index: int
    window_count: int
    T: int
    channel_scores: list[float] | None = None
    channel_labels: list[str] | None = None
    period_scores: list[float] | None = None
    period_labels: list[str] | None = None
    period_ranges: list[tuple[int, int]] | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.window_count < 1:
            raise ShapeError("a contribution report needs at least one window")
        for name, scores, labels in (
            ("channel", self.channel_scores, self.channel_labels),
            ("period", self.period_scores, self.period_labels),
        ):
            if scores is None:
                continue
            if labels is None or len(labels) != len(scores):
                raise ShapeError(f"{name} labels do not match {name} scores")
            arr = np.asarray(scores, dtype=np.float64)
            if np.any(arr < 0.0):
                raise ShapeError(f"{name} scores must be nonnegative")
            if abs(float(arr.sum()) - 1.0) > _SUM_TOL:
                raise ShapeError(f"{name} scores sum to {arr.sum():.8f}, expected 1")
        if self.period_scores is not None:
            if self.period_ranges is None or len(self.period_ranges) != len(self.period_scores):
                raise ShapeError("period ranges do not match period scores")
            for start, end in self.period_ranges:
                if not 0 <= start < end <= self.T:
                    raise ShapeError(f"component range [{start}, {end}) outside [0, {self.T})")

    def to_dict(self) -> dict:
        out = {
            "layer_index": self.layer_index,
            "window_count": self.window_count,
            "T": self.T,
            "metadata": self.metadata,
        }
        if self.channel_scores is not None:
            out["channel_scores"] = self.channel_scores
            out["channel_labels"] = self.channel_labels
        if self.period_scores is not None:
            out["period_scores"] = self.period_scores
            out["period_labels"] = self.period_labels
            out["period_ranges"] = [list(r) for r in self.period_ranges]
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "ContributionReport":
        ranges = d.get("period_ranges")
        return cls(
            layer_index=d["layer_index"],
            window_count=d["window_count"],
            T=d["T"],
            channel_scores=d.get("channel_scores"),
            channel_labels=d.get("channel_labels"),
            period_scores=d.get("period_scores"),
            period_labels=d.get("period_labels"),
            period_ranges=[tuple(r) for r in ranges] if ranges is not None else None,
            metadata=d.get("metadata", {}),
        )


def _as_prepared(model: IsterModel, window) -> PreparedWindow:
    lookback = window.lookback if isinstance(window, TimeWindow) else window
    return model.prepare_window(lookback)


def extract_contributions(
    model: IsterModel,
    windows: list,
    layer: int | str = "last",
    branch: str = "both",
    channel_names: list[str] | None = None,
) -> ContributionReport:
    """Average the captured Query-softmax weights into one report.

    ``windows`` holds TimeWindows or raw [T, N] arrays. Windows whose
    discovered period plan differs are grouped; the largest group is
    reported and the rest are tallied in ``metadata``. ``layer`` picks the
    encoder block ("last" or an index); ``branch`` limits the readout to
    the channel or period side, both by default.
    """
    if not windows:
        raise ShapeError("extract_contributions needs at least one window")
    if branch not in BRANCHES:
        raise ConfigError(f"branch {branch!r} not in {BRANCHES}")
    cfg = model.config
    want_channel = branch in ("both", "channel")
    want_period = branch in ("both", "period")
    if want_channel and cfg.c_attention != "dot":
        raise ConfigError(
            f"channel branch uses {cfg.c_attention!r} attention; contribution "
            "scores need the dot mechanism (try branch='period')"
        )
    if want_period and cfg.h_attention != "dot":
        raise ConfigError(
            f"period branch uses {cfg.h_attention!r} attention; contribution "
            "scores need the dot mechanism (try branch='channel')"
        )
    if layer == "last":
        layer_index = cfg.blocks - 1
    else:
        layer_index = int(layer)
        if not 0 <= layer_index < cfg.blocks:
            raise ConfigError(f"layer index {layer_index} outside 0..{cfg.blocks - 1}")
    if channel_names is None:
        channel_names = [f"c{i}" for i in range(cfg.N)]
    if len(channel_names) != cfg.N:
        raise ShapeError(f"{len(channel_names)} channel names for {cfg.N} channels")

    prepared = [_as_prepared(model, w) for w in windows]
    groups: dict[tuple, list[PreparedWindow]] = {}
    for p in prepared:
        groups.setdefault(p.plan.signature(), []).append(p)
    ordered = sorted(groups.items(), key=lambda kv: (-len(kv[1]), kv[0]))
    signature, chosen = ordered[0]
    skipped = [
        {"signature": [sig[0], list(sig[1])], "count": len(members)}
        for sig, members in ordered[1:]
    ]

    plan = chosen[0].plan
    channel_sum = np.zeros(cfg.N)
    period_sum = np.zeros(plan.P + 1)
    was_training = model.training
    model.training = False
    try:
        chunk_size = 128
        for start in range(0, len(chosen), chunk_size):
            chunk = chosen[start : start + chunk_size]
            _, cap = model.forward_prepared(chunk, capture=True)
            if want_channel:
                g_c = cap.c_blocks[layer_index]  # [B, N, D]
                channel_sum += g_c.mean(axis=2).sum(axis=0)
            if want_period:
                g_h = cap.h_blocks[layer_index]  # [B, N, P+1, D]
                period_sum += g_h.mean(axis=(1, 3)).sum(axis=0)
    finally:
        model.training = was_training

    count = len(chosen)
    metadata = {
        "plan": {"T": plan.T, "periods": list(plan.periods)},
        "total_windows": len(prepared),
        "skipped_plan_groups": skipped,
    }
    period_labels = period_ranges = None
    if want_period:
        period_labels = ["channel-token"]
        period_ranges = [(0, plan.T)]
        for i, slot in enumerate(plan.layout):
            period_labels.append(plan.component_label(i))
            period_ranges.append((slot.start, slot.start + slot.length))
    return ContributionReport(
        layer_index=layer_index,
        window_count=count,
        T=cfg.T,
        channel_scores=(channel_sum / count).tolist() if want_channel else None,
        channel_labels=list(channel_names) if want_channel else None,
        period_scores=(period_sum / count).tolist() if want_period else None,
        period_labels=period_labels,
        period_ranges=period_ranges,
        metadata=metadata,
    )


# -- export ---------------------------------------------------------------------


def _rows(report: ContributionReport) -> list[tuple[str, float, int, int]]:
    rows = []
    if report.channel_scores is not None:
        for label, score in zip(report.channel_labels, report.channel_scores):
            rows.append((label, score, 0, report.T))
    if report.period_scores is not None:
        for label, score, (start, end) in zip(
            report.period_labels, report.period_scores, report.period_ranges
        ):
            rows.append((label, score, start, end))
    return rows


def _render_csv(report: ContributionReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["label", "score", "range_start", "range_end"])
    for label, score, start, end in _rows(report):
        writer.writerow([label, f"{score:.12g}", start, end])
    return buf.getvalue()


def _render_svg(report: ContributionReport) -> str:
    """800x400 bar chart; channel bars blue, period bars rust."""
    width, height = 800, 400
    left, right, top, bottom = 50, 10, 20, 90
    rows = _rows(report)
    n_channel = len(report.channel_scores) if report.channel_scores is not None else 0
    plot_w = width - left - right
    plot_h = height - top - bottom
    peak = max(score for _, score, _, _ in rows)
    peak = peak if peak > 0 else 1.0
    slot = plot_w / len(rows)
    bar_w = slot * 0.8

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="#ffffff"/>',
        f'<line x1="{left}" y1="{top + plot_h}" x2="{left + plot_w}" y2="{top + plot_h}" '
        'stroke="#333333" stroke-width="1"/>',
    ]
    for i, (label, score, _, _) in enumerate(rows):
        x = left + i * slot + (slot - bar_w) / 2
        h = plot_h * (score / peak)
        y = top + plot_h - h
        color = "#4472a8" if i < n_channel else "#a85f44"
        parts.append(
            f'<rect x="{x:.2f}" y="{y:.2f}" width="{bar_w:.2f}" height="{h:.2f}" fill="{color}"/>'
        )
        parts.append(
            f'<text x="{x + bar_w / 2:.2f}" y="{y - 4:.2f}" font-size="10" '
            f'text-anchor="middle" fill="#333333">{score:.4f}</text>'
        )
        lx = left + i * slot + slot / 2
        ly = top + plot_h + 12
        parts.append(
            f'<text x="{lx:.2f}" y="{ly:.2f}" font-size="11" text-anchor="end" fill="#333333" '
            f'transform="rotate(-45 {lx:.2f} {ly:.2f})">{_svg_escape(label)}</text>'
        )
    parts.append(
        f'<text x="{left}" y="{top - 6}" font-size="12" fill="#333333">'
        f"contribution scores (layer {report.layer_index}, {report.window_count} windows)</text>"
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _svg_escape(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def export_report(report: ContributionReport, path: str, format: str = "json") -> None:
    """Write the report as JSON, CSV, or an SVG bar chart (deterministic)."""
    if format == "json":
        text = json.dumps(report.to_dict(), sort_keys=True, indent=1)
    elif format == "csv":
        text = _render_csv(report)
    elif format == "svg-bar":
        text = _render_svg(report)
    else:
        raise ConfigError(f"export format {format!r} not in {EXPORT_FORMATS}")
    try:
        atomic_write_text(path, text)
    except OSError as exc:
        raise DataError(f"cannot write report to {path}: {exc}") from exc
