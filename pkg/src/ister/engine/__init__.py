"""Reverse-mode array engine: DiffArray, Tape, and the op vocabulary."""

from .array import (
    DiffArray,
    OpCounter,
    Tape,
    add,
    array,
    concat,
    dropout,
    elementwise,
    gelu,
    layer_norm,
    matmul,
    mul,
    neg,
    param,
    reduce,
    reduce_mean,
    reduce_sum,
    reshape,
    slice_,
    softmax_along,
    sub,
    transpose,
)

__all__ = [
    "DiffArray",
    "OpCounter",
    "Tape",
    "add",
    "array",
    "concat",
    "dropout",
    "elementwise",
    "gelu",
    "layer_norm",
    "matmul",
    "mul",
    "neg",
    "param",
    "reduce",
    "reduce_mean",
    "reduce_sum",
    "reshape",
    "slice_",
    "softmax_along",
    "sub",
    "transpose",
]
