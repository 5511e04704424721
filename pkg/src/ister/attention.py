"""Token-mixing mechanisms.

``dot_attention`` aggregates all tokens into one integrated representation
r = sum_i softmax(Q)_i * K_i (softmax over the token axis, independently
per feature) and gates each value row with it: out_i = r * V_i. The cost
is linear in the token count, and the softmax output G doubles as an
interpretability readout: a probability distribution over tokens per
feature.

``multihead_attention`` is the standard scaled dot-product reference used
for ablations and the complexity comparison; its score matrix makes it
quadratic in tokens.

``count_ops`` measures the attention cores alone. All linear projections
(Q/K/V and the multihead output map) are excluded: they cost O(L*D^2) for
every mechanism and would mask the scaling difference being measured.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .engine import (
    DiffArray,
    OpCounter,
    matmul,
    mul,
    param,
    reduce_sum,
    reshape,
    softmax_along,
    transpose,
)
from .engine.array import _coerce
from .errors import ShapeError

DEFAULT_HEADS = 8


@dataclass
class QKVParams:
    """Projection matrices; biases default absent, w_o used by multihead only."""

    w_q: DiffArray  # [D, D]
    w_k: DiffArray
    w_v: DiffArray
    b_q: DiffArray | None = None
    b_k: DiffArray | None = None
    b_v: DiffArray | None = None
    w_o: DiffArray | None = None

    @classmethod
    def init(
        cls, D: int, rng: np.random.Generator, with_output: bool = False
    ) -> "QKVParams":
        bound = 1.0 / math.sqrt(D)

        def draw():
            return param(rng.uniform(-bound, bound, size=(D, D)))

        return cls(
            w_q=draw(),
            w_k=draw(),
            w_v=draw(),
            w_o=draw() if with_output else None,
        )

    @property
    def D(self) -> int:
        return self.w_q.shape[0]

    def named(self, prefix: str) -> dict[str, DiffArray]:
        out = {f"{prefix}.w_q": self.w_q, f"{prefix}.w_k": self.w_k, f"{prefix}.w_v": self.w_v}
        for label, arr in (("b_q", self.b_q), ("b_k", self.b_k), ("b_v", self.b_v), ("w_o", self.w_o)):
            if arr is not None:
                out[f"{prefix}.{label}"] = arr
        return out


@dataclass(frozen=True)
class AttentionWeights:
    """Captured softmax outputs: per-feature distributions over tokens."""

    weights: np.ndarray  # [L_tok, D], every column sums to 1
    token_scores: np.ndarray  # [L_tok], mean over D; sums to 1

    def __post_init__(self):
        if np.any(self.weights < 0.0):
            raise ValueError("attention weights must be nonnegative")


def _project(tokens: DiffArray, params: QKVParams) -> tuple[DiffArray, DiffArray, DiffArray]:
    if tokens.shape[-1] != params.D:
        raise ShapeError(
            f"tokens have feature width {tokens.shape[-1]}, params expect {params.D}"
        )
    q = matmul(tokens, params.w_q)
    k = matmul(tokens, params.w_k)
    v = matmul(tokens, params.w_v)
    if params.b_q is not None:
        q = q + params.b_q
    if params.b_k is not None:
        k = k + params.b_k
    if params.b_v is not None:
        v = v + params.b_v
    return q, k, v


def dot_core(q: DiffArray, k: DiffArray, v: DiffArray) -> tuple[DiffArray, DiffArray]:
    """Linear-time core on [..., L, D]: returns (output, G).

    G = softmax over the token axis of q; r = sum_i G_i * K_i is a single
    D-vector per batch row, broadcast-multiplied into every value row.
    """
    g = softmax_along(q, axis=-2)
    r = reduce_sum(mul(g, k), axis=-2, keepdims=True)  # [..., 1, D]
    return mul(r, v), g


def mha_core(q: DiffArray, k: DiffArray, v: DiffArray, heads: int) -> DiffArray:
    """Quadratic scaled dot-product core on [B, L, D]."""
    b, L, D = q.shape
    d = D // heads

    def split(x: DiffArray) -> DiffArray:
        return transpose(reshape(x, (b, L, heads, d)), (0, 2, 1, 3))  # [B, h, L, d]

    qh = mul(split(q), 1.0 / math.sqrt(d))
    scores = matmul(qh, transpose(split(k), (0, 1, 3, 2)))  # [B, h, L, L]
    attn = softmax_along(scores, axis=-1)
    ctx = matmul(attn, split(v))  # [B, h, L, d]
    return reshape(transpose(ctx, (0, 2, 1, 3)), (b, L, D))


def dot_attention(
    tokens, params: QKVParams, capture_weights: bool = False
) -> tuple[DiffArray, AttentionWeights | None]:
    """Dot-attention over a token set [L_tok, D].

    Output row i is r * V_i with r the integrated representation; the
    optional capture returns the softmax distributions for reporting.
    """
    tokens = _coerce(tokens)
    if tokens.ndim != 2:
        raise ShapeError(f"dot_attention expects [L_tok, D], got shape {tokens.shape}")
    if tokens.shape[0] < 1:
        raise ShapeError("dot_attention needs at least one token")
    q, k, v = _project(tokens, params)
    out, g = dot_core(q, k, v)
    if not capture_weights:
        return out, None
    weights = g.data.copy()
    return out, AttentionWeights(weights=weights, token_scores=weights.mean(axis=1))


def multihead_attention(tokens, heads: int, params: QKVParams) -> DiffArray:
    """Standard multi-head self-attention with output projection, [L_tok, D]."""
    tokens = _coerce(tokens)
    if tokens.ndim != 2:
        raise ShapeError(f"multihead_attention expects [L_tok, D], got shape {tokens.shape}")
    D = tokens.shape[1]
    if D % heads != 0:
        raise ShapeError(f"feature width {D} not divisible by {heads} heads")
    if params.w_o is None:
        raise ShapeError("multihead attention requires an output projection (w_o)")
    q, k, v = _project(tokens, params)
    L = tokens.shape[0]
    lift = (1, L, D)
    ctx = mha_core(reshape(q, lift), reshape(k, lift), reshape(v, lift), heads)
    return matmul(reshape(ctx, (L, D)), params.w_o)


def count_ops(mechanism: str, L_tok: int, D: int, heads: int = DEFAULT_HEADS) -> int:
    """Exact scalar add+multiply count of one attention-core forward pass.

    Projections are excluded (see module docstring); the count is a pure
    function of the shapes, so repeated calls agree exactly.
    """
    q = DiffArray(np.zeros((1, L_tok, D)))
    k = DiffArray(np.zeros((1, L_tok, D)))
    v = DiffArray(np.zeros((1, L_tok, D)))
    with OpCounter() as counter:
        if mechanism == "dot":
            dot_core(q, k, v)
        elif mechanism == "multihead":
            if D % heads != 0:
                raise ShapeError(f"feature width {D} not divisible by {heads} heads")
            mha_core(q, k, v, heads)
        else:
            raise ValueError(f"unknown mechanism {mechanism!r}; expected dot or multihead")
    return counter.total
