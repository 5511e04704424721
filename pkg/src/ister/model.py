"""The dual-encoder forecasting model.

Forward pipeline per window: instance-normalize, decompose into seasonal
and trend, discover periods on the seasonal part, embed into channel +
periodic tokens, then run two encoder stacks side by side: one mixes the
P+1 tokens of each channel (periodic structure), the other mixes the N
channel tokens (cross-series structure). Their outputs fuse by adding the
channel branch to the mean of the periodic tokens, and two linear heads
map the fusion (D to S) and the trend (T to S) to the horizon, summed and
denormalized.

Internally everything runs batched over windows that share one period
plan; the public ``forward`` wraps a batch of one.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields, replace

import numpy as np

from .attention import QKVParams, dot_core, mha_core
from .embedding import EmbedParams, embed_batch
from .engine import (
    DiffArray,
    dropout as dropout_op,
    gelu,
    layer_norm,
    matmul,
    param,
    reduce_mean,
    reshape,
    transpose,
)
from .engine.array import _coerce
from .errors import ConfigError, NumericError, ShapeError
from .ioutil import atomic_write_text
from .periodicity import PeriodPlan, amplitude_spectrum, topk_periods
from .preprocess import (
    DEFAULT_DECOMP_KERNEL,
    NormStats,
    instance_normalize,
    series_decomp,
)

ATTENTION_KINDS = ("dot", "multihead", "none")
VARIANTS = ("full", "no-dot", "plus-msa", "no-channel", "no-period")
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    """Static shape and architecture choices; everything else derives."""

    T: int
    S: int
    N: int
    D: int = 128
    k: int = 2
    blocks: int = 1
    h_attention: str = "dot"  # periodic-token branch
    c_attention: str = "dot"  # channel-token branch
    ffn_multiple: int = 2
    dropout: float = 0.1
    decomp_kernel: int = DEFAULT_DECOMP_KERNEL
    heads: int = 8

    def __post_init__(self):
        if self.T < 4 or self.S < 1 or self.N < 1:
            raise ConfigError(f"need T >= 4, S >= 1, N >= 1, got T={self.T} S={self.S} N={self.N}")
        if self.D < 8:
            raise ConfigError(f"hidden width D must be at least 8, got {self.D}")
        if not 1 <= self.k <= self.T // 2:
            raise ConfigError(f"k must be in 1..{self.T // 2} for T={self.T}, got {self.k}")
        if self.blocks < 1:
            raise ConfigError(f"block count must be at least 1, got {self.blocks}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.ffn_multiple < 1:
            raise ConfigError(f"ffn multiple must be at least 1, got {self.ffn_multiple}")
        if self.decomp_kernel % 2 == 0:
            raise ConfigError(f"decomposition kernel must be odd, got {self.decomp_kernel}")
        for kind in (self.h_attention, self.c_attention):
            if kind not in ATTENTION_KINDS:
                raise ConfigError(f"attention kind {kind!r} not in {ATTENTION_KINDS}")
        if "multihead" in (self.h_attention, self.c_attention) and self.D % self.heads:
            raise ConfigError(f"D={self.D} must be divisible by heads={self.heads}")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def ablation_variant(config: ModelConfig, variant: str) -> ModelConfig:
    """Rewrite the per-branch attention kinds for one named ablation."""
    if variant == "full":
        return replace(config, h_attention="dot", c_attention="dot")
    if variant == "no-dot":
        return replace(config, h_attention="none", c_attention="none")
    if variant == "plus-msa":
        return replace(config, h_attention="multihead", c_attention="multihead")
    if variant == "no-channel":
        return replace(config, h_attention="dot", c_attention="none")
    if variant == "no-period":
        return replace(config, h_attention="none", c_attention="dot")
    raise ConfigError(f"unknown variant {variant!r}; expected one of {VARIANTS}")


@dataclass
class FfnParams:
    """Two-layer position-wise network: D -> hidden -> D with GELU."""

    w1: DiffArray
    b1: DiffArray
    w2: DiffArray
    b2: DiffArray

    @classmethod
    def init(cls, D: int, hidden: int, rng: np.random.Generator) -> "FfnParams":
        b_in = 1.0 / np.sqrt(D)
        b_hid = 1.0 / np.sqrt(hidden)
        return cls(
            w1=param(rng.uniform(-b_in, b_in, size=(D, hidden))),
            b1=param(np.zeros(hidden)),
            w2=param(rng.uniform(-b_hid, b_hid, size=(hidden, D))),
            b2=param(np.zeros(D)),
        )

    def named(self, prefix: str) -> dict[str, DiffArray]:
        return {
            f"{prefix}.w1": self.w1,
            f"{prefix}.b1": self.b1,
            f"{prefix}.w2": self.w2,
            f"{prefix}.b2": self.b2,
        }

    def apply(self, x: DiffArray) -> DiffArray:
        return matmul(gelu(matmul(x, self.w1) + self.b1), self.w2) + self.b2


@dataclass
class BlockParams:
    """One pre-norm residual block: token mixer sublayer + FFN sublayer.

    The mixer is attention when the branch kind is dot/multihead, and a
    second FFN (its own parameters) when the attention is ablated away.
    """

    kind: str
    mixer_attn: QKVParams | None
    mixer_ffn: FfnParams | None
    ffn: FfnParams

    @classmethod
    def init(cls, kind: str, D: int, hidden: int, rng: np.random.Generator) -> "BlockParams":
        if kind in ("dot", "multihead"):
            attn = QKVParams.init(D, rng, with_output=(kind == "multihead"))
            mixer_ffn = None
        elif kind == "none":
            attn = None
            mixer_ffn = FfnParams.init(D, hidden, rng)
        else:
            raise ConfigError(f"attention kind {kind!r} not in {ATTENTION_KINDS}")
        return cls(kind=kind, mixer_attn=attn, mixer_ffn=mixer_ffn, ffn=FfnParams.init(D, hidden, rng))

    def named(self, prefix: str) -> dict[str, DiffArray]:
        out: dict[str, DiffArray] = {}
        if self.mixer_attn is not None:
            out.update(self.mixer_attn.named(f"{prefix}.attn"))
        if self.mixer_ffn is not None:
            out.update(self.mixer_ffn.named(f"{prefix}.attn_ffn"))
        out.update(self.ffn.named(f"{prefix}.ffn"))
        return out


def encoder_block(
    tokens,
    params: BlockParams,
    heads: int = 8,
    dropout: float = 0.0,
    rng: np.random.Generator | None = None,
    capture: bool = False,
) -> tuple[DiffArray, np.ndarray | None]:
    """Pre-norm residual block on [B, L_tok, D].

    Returns the transformed tokens and, when capturing on a dot branch,
    the softmax weights G [B, L_tok, D]. Dropout applies only when a rate
    and generator are given (training).
    """
    x = _coerce(tokens)
    if x.ndim != 3:
        raise ShapeError(f"encoder block expects [B, L_tok, D], got shape {x.shape}")
    g_out: np.ndarray | None = None
    normed = layer_norm(x)
    if params.kind == "dot":
        p = params.mixer_attn
        q, k, v = matmul(normed, p.w_q), matmul(normed, p.w_k), matmul(normed, p.w_v)
        delta, g = dot_core(q, k, v)
        if capture:
            g_out = g.data.copy()
    elif params.kind == "multihead":
        p = params.mixer_attn
        q, k, v = matmul(normed, p.w_q), matmul(normed, p.w_k), matmul(normed, p.w_v)
        delta = matmul(mha_core(q, k, v, heads), p.w_o)
    else:
        delta = params.mixer_ffn.apply(normed)
    if dropout > 0.0 and rng is not None:
        delta = dropout_op(delta, dropout, rng)
    y = x + delta
    delta2 = params.ffn.apply(layer_norm(y))
    if dropout > 0.0 and rng is not None:
        delta2 = dropout_op(delta2, dropout, rng)
    return y + delta2, g_out


@dataclass(frozen=True)
class PreparedWindow:
    """Numpy-side preprocessing of one lookback window."""

    seasonal: np.ndarray  # [T, N], of the normalized input
    trend: np.ndarray  # [T, N]
    plan: PeriodPlan
    stats: NormStats


@dataclass
class AttentionCapture:
    """Raw softmax weights collected during one (batched) forward."""

    plan: PeriodPlan
    h_blocks: list[np.ndarray | None]  # per block: [B, N, P+1, D] or None
    c_blocks: list[np.ndarray | None]  # per block: [B, N, D] or None


@dataclass
class Forecast:
    """Model output for one window."""

    prediction: np.ndarray  # [S, N], denormalized
    stats: NormStats
    contributions: AttentionCapture | None = None


class IsterModel:
    """Dual-encoder forecaster; owns parameters and the forward pass."""

    def __init__(self, config: ModelConfig, seed: int = 0):
        self.config = config
        rng = np.random.default_rng(seed)
        hidden = config.ffn_multiple * config.D
        self.embed_params = EmbedParams.init(config.T, config.D, rng)
        self.h_blocks = [
            BlockParams.init(config.h_attention, config.D, hidden, rng)
            for _ in range(config.blocks)
        ]
        self.c_blocks = [
            BlockParams.init(config.c_attention, config.D, hidden, rng)
            for _ in range(config.blocks)
        ]
        bound_d = 1.0 / np.sqrt(config.D)
        bound_t = 1.0 / np.sqrt(config.T)
        self.seasonal_head = param(rng.uniform(-bound_d, bound_d, size=(config.D, config.S)))
        self.trend_head = param(rng.uniform(-bound_t, bound_t, size=(config.T, config.S)))
        self._dropout_rng: np.random.Generator | None = None
        self.training = False

    # -- parameter access -------------------------------------------------

    def parameters(self) -> dict[str, DiffArray]:
        """Stable name-to-array mapping covering every trainable tensor."""
        out = dict(self.embed_params.named("embed"))
        for i, blk in enumerate(self.h_blocks):
            out.update(blk.named(f"encoder_h.{i}"))
        for i, blk in enumerate(self.c_blocks):
            out.update(blk.named(f"encoder_c.{i}"))
        out["head.seasonal"] = self.seasonal_head
        out["head.trend"] = self.trend_head
        return out

    def parameter_count(self) -> int:
        return sum(p.size for p in self.parameters().values())

    def zero_grads(self) -> None:
        for p in self.parameters().values():
            p.grad = None

    def set_training(self, training: bool, seed: int = 0) -> None:
        """Toggle dropout; the seeded generator keeps runs reproducible."""
        self.training = training
        self._dropout_rng = np.random.default_rng(seed) if training else None

    # -- forward ------------------------------------------------------------

    def prepare_window(self, x) -> PreparedWindow:
        """Numpy preprocessing: normalize, decompose, discover periods."""
        arr = np.asarray(x, dtype=np.float64)
        cfg = self.config
        if arr.shape != (cfg.T, cfg.N):
            raise ShapeError(f"input shape {arr.shape} does not match config [T={cfg.T}, N={cfg.N}]")
        normed, stats = instance_normalize(arr)
        pair = series_decomp(normed, kernel=cfg.decomp_kernel)
        plan = topk_periods(amplitude_spectrum(pair.seasonal), k=cfg.k, T=cfg.T)
        return PreparedWindow(seasonal=pair.seasonal, trend=pair.trend, plan=plan, stats=stats)

    def forward_prepared(
        self, prepared: list[PreparedWindow], capture: bool = False
    ) -> tuple[DiffArray, AttentionCapture | None]:
        """Batched forward over windows sharing one period plan.

        Returns denormalized predictions [B, S, N]; differentiable w.r.t.
        the parameters when run under a tape.
        """
        if not prepared:
            raise ShapeError("forward_prepared needs at least one window")
        plan = prepared[0].plan
        if any(p.plan.signature() != plan.signature() for p in prepared):
            raise ShapeError("all windows in one batch must share a period plan")
        cfg = self.config
        b = len(prepared)
        seasonal = np.stack([p.seasonal for p in prepared])  # [B, T, N]
        trend = np.stack([p.trend for p in prepared])
        scale = np.stack([p.stats.sd + p.stats.epsilon for p in prepared])[:, None, :]
        mean = np.stack([p.stats.mean for p in prepared])[:, None, :]

        rng = self._dropout_rng if self.training else None
        rate = cfg.dropout if self.training else 0.0

        tokens = embed_batch(DiffArray(seasonal), plan, self.embed_params)  # [B,N,P+1,D]
        c_tok = tokens[:, :, 0, :]  # [B, N, D]
        h_tok = reshape(tokens, (b * cfg.N, plan.P + 1, cfg.D))

        cap = AttentionCapture(plan=plan, h_blocks=[], c_blocks=[]) if capture else None
        for h_blk, c_blk in zip(self.h_blocks, self.c_blocks):
            h_tok, g_h = encoder_block(
                h_tok, h_blk, heads=cfg.heads, dropout=rate, rng=rng, capture=capture
            )
            c_tok, g_c = encoder_block(
                c_tok, c_blk, heads=cfg.heads, dropout=rate, rng=rng, capture=capture
            )
            if capture:
                cap.h_blocks.append(
                    g_h.reshape(b, cfg.N, plan.P + 1, cfg.D) if g_h is not None else None
                )
                cap.c_blocks.append(g_c)

        h_final = reshape(h_tok, (b, cfg.N, plan.P + 1, cfg.D))
        pooled = reduce_mean(h_final[:, :, 1:, :], axis=2)  # periodic tokens only
        fused = c_tok + pooled  # [B, N, D]

        y_seasonal = transpose(matmul(fused, self.seasonal_head), (0, 2, 1))  # [B, S, N]
        trend_in = transpose(DiffArray(trend), (0, 2, 1))  # [B, N, T]
        y_trend = transpose(matmul(trend_in, self.trend_head), (0, 2, 1))
        y = y_seasonal + y_trend
        denormed = y * DiffArray(scale) + DiffArray(mean)
        return denormed, cap

    def forward(self, x, capture: bool = False) -> Forecast:
        """Forecast one window [T, N] -> [S, N] on the original scale."""
        prepared = self.prepare_window(x)
        out, cap = self.forward_prepared([prepared], capture=capture)
        prediction = out.data[0]
        if not np.all(np.isfinite(prediction)):
            raise NumericError("forward produced non-finite predictions")
        return Forecast(prediction=prediction, stats=prepared.stats, contributions=cap)

    # -- persistence -----------------------------------------------------------

    def save(self, path: str) -> None:
        save_checkpoint(self, path)

    def state_dict(self) -> dict:
        return {
            "format_version": CHECKPOINT_VERSION,
            "config": self.config.to_dict(),
            "parameters": {
                name: {"shape": list(p.shape), "data": p.data.reshape(-1).tolist()}
                for name, p in self.parameters().items()
            },
        }

    def load_state(self, state: dict) -> None:
        params = self.parameters()
        for name, entry in state["parameters"].items():
            if name not in params:
                raise ConfigError(f"checkpoint parameter {name!r} not in model")
            target = params[name]
            arr = np.asarray(entry["data"], dtype=np.float64).reshape(entry["shape"])
            if arr.shape != target.shape:
                raise ConfigError(
                    f"checkpoint parameter {name!r} has shape {arr.shape}, model needs {target.shape}"
                )
            target.data = arr
        missing = set(params) - set(state["parameters"])
        if missing:
            raise ConfigError(f"checkpoint missing parameters: {sorted(missing)}")

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.parameters().items()}

    def restore(self, snap: dict[str, np.ndarray]) -> None:
        for name, p in self.parameters().items():
            p.data = snap[name].copy()


def save_checkpoint(model: IsterModel, path: str) -> None:
    """Write config + named parameters as JSON, atomically, byte-stable."""
    atomic_write_text(path, json.dumps(model.state_dict(), sort_keys=True, indent=1))


def load_checkpoint(path: str) -> IsterModel:
    """Rebuild a model from a checkpoint file."""
    try:
        with open(path, encoding="utf-8") as fh:
            state = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot open checkpoint {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"checkpoint {path} is not valid JSON: {exc}") from exc
    version = state.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise ConfigError(f"unsupported checkpoint version {version!r}")
    config = ModelConfig(**state["config"])
    model = IsterModel(config, seed=0)
    model.load_state(state)
    return model
