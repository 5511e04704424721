"""Multi-scale inverted embedding.

Each channel of the seasonal series becomes one whole-sequence "channel
token" plus one token per periodic component from the period plan. Tokens
embed along the temporal dimension: a length-T slice (zero-padded
conceptually) maps through a T-to-D linear projection.

Zero padding never materializes: a padded component contributes
x[start:start+length] through the first ``length`` rows of the projection
matrix, so each token is a slice-matmul. That keeps the whole embedding
differentiable with respect to both the input and the parameters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine import DiffArray, concat, matmul, param, reshape, transpose
from .engine.array import _coerce
from .errors import ShapeError
from .periodicity import PeriodPlan


@dataclass
class EmbedParams:
    """Two T-to-D projections: one for channel tokens, one shared by all
    periodic components."""

    channel_w: DiffArray  # [T, D]
    channel_b: DiffArray  # [D]
    period_w: DiffArray  # [T, D]
    period_b: DiffArray  # [D]

    @classmethod
    def init(cls, T: int, D: int, rng: np.random.Generator) -> "EmbedParams":
        bound = 1.0 / np.sqrt(T)
        return cls(
            channel_w=param(rng.uniform(-bound, bound, size=(T, D))),
            channel_b=param(np.zeros(D)),
            period_w=param(rng.uniform(-bound, bound, size=(T, D))),
            period_b=param(np.zeros(D)),
        )

    @property
    def T(self) -> int:
        return self.channel_w.shape[0]

    @property
    def D(self) -> int:
        return self.channel_w.shape[1]

    def named(self, prefix: str = "embed") -> dict[str, DiffArray]:
        return {
            f"{prefix}.channel_w": self.channel_w,
            f"{prefix}.channel_b": self.channel_b,
            f"{prefix}.period_w": self.period_w,
            f"{prefix}.period_b": self.period_b,
        }


@dataclass
class TokenTensor:
    """Embedded representation: tokens [N, P+1, D], channel token at index 0,
    periodic components following in plan layout order."""

    tokens: DiffArray
    plan: PeriodPlan

    def __post_init__(self):
        if self.tokens.shape[-2] != self.plan.P + 1:
            raise ShapeError(
                f"token axis has {self.tokens.shape[-2]} entries, plan needs {self.plan.P + 1}"
            )

    @property
    def channel_tokens(self) -> DiffArray:
        """C = tokens[:, 0, :], shape [N, D]."""
        return self.tokens[:, 0, :]


def embed_batch(x, plan: PeriodPlan, params: EmbedParams) -> DiffArray:
    """Embed a batch of seasonal windows [B, T, N] to tokens [B, N, P+1, D]."""
    x = _coerce(x)
    if x.ndim != 3 or x.shape[1] != params.T:
        raise ShapeError(
            f"embed_batch expects [B, T={params.T}, N], got shape {x.shape}"
        )
    if plan.T != params.T:
        raise ShapeError(f"plan T={plan.T} does not match params T={params.T}")
    xt = transpose(x, (0, 2, 1))  # [B, N, T]
    channel = matmul(xt, params.channel_w) + params.channel_b  # [B, N, D]
    b, n = x.shape[0], x.shape[2]
    pieces = [reshape(channel, (b, n, 1, params.D))]
    for slot in plan.layout:
        segment = xt[:, :, slot.start : slot.start + slot.length]  # [B, N, len]
        tok = matmul(segment, params.period_w[: slot.length, :]) + params.period_b
        pieces.append(reshape(tok, (b, n, 1, params.D)))
    return concat(pieces, axis=2)


def embed(x_seasonal, plan: PeriodPlan, params: EmbedParams) -> TokenTensor:
    """Embed one seasonal window [T, N] into a TokenTensor [N, P+1, D]."""
    x = _coerce(x_seasonal)
    if x.ndim != 2:
        raise ShapeError(f"embed expects [T, N], got shape {x.shape}")
    batched = embed_batch(reshape(x, (1,) + x.shape), plan, params)
    n = x.shape[1]
    return TokenTensor(
        tokens=reshape(batched, (n, plan.P + 1, params.D)),
        plan=plan,
    )
