"""Dense 64-bit arrays with reverse-mode gradients.

A ``DiffArray`` wraps a float64 numpy array plus an optional gradient
buffer. Operations build outputs eagerly and, when a tape is active and
some input requires a gradient, record a backward closure on it. With no
active tape the same functions run as plain numpy at full speed, which is
how inference and benchmarking work.

Broadcasting follows numpy; backward sums gradient contributions over the
broadcast axes back to each parent's shape.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from .. import kernels
from ..errors import NumericError, ShapeError, TapeError
from .tape import OpCounter, Tape, active_counter, active_tape

__all__ = [
    "DiffArray",
    "Tape",
    "OpCounter",
    "array",
    "param",
    "add",
    "sub",
    "mul",
    "neg",
    "elementwise",
    "matmul",
    "reduce",
    "reduce_sum",
    "reduce_mean",
    "softmax_along",
    "gelu",
    "layer_norm",
    "dropout",
    "transpose",
    "reshape",
    "concat",
    "slice_",
]


class DiffArray:
    """A dense float64 array participating in reverse-mode differentiation."""

    __slots__ = ("data", "grad", "requires_grad", "_tape", "_tid")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._tape = None
        self._tid = None

    # -- introspection -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"DiffArray(shape={self.shape}{flag})"

    # -- gradient plumbing ---------------------------------------------
    def zero_grad(self) -> None:
        self.grad = None

    def backward(self, seed_grad: np.ndarray | None = None) -> None:
        """Run backward from this (scalar) array on the tape that recorded it."""
        if self._tape is None:
            raise TapeError("array was not recorded on any tape")
        self._tape.backward(self, seed_grad)

    # -- operator sugar --------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return slice_(self, key)

    def sum(self, axis=None, keepdims: bool = False):
        return reduce_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return reduce_mean(self, axis, keepdims)


# -- construction ------------------------------------------------------


def _check_finite(data: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(data)):
        raise NumericError(f"{what} contains non-finite values")
    return data


def array(data, requires_grad: bool = False) -> DiffArray:
    """Wrap data as a DiffArray, validating finiteness at the boundary."""
    out = DiffArray(data, requires_grad=requires_grad)
    _check_finite(out.data, "array input")
    return out


def param(data) -> DiffArray:
    """Wrap data as a trainable parameter (leaf with requires_grad)."""
    return array(data, requires_grad=True)


def _coerce(x) -> DiffArray:
    return x if isinstance(x, DiffArray) else DiffArray(x)


# -- recording helpers -------------------------------------------------


def _finish(out: DiffArray, parents: Sequence[DiffArray], backward_fn) -> DiffArray:
    """Record the op if a tape is active and any parent needs gradients."""
    tape = active_tape()
    if tape is not None and any(p.requires_grad for p in parents):
        out.requires_grad = True
        tape.record(out, parents, backward_fn)
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum gradient over axes numpy broadcasting expanded, back to ``shape``."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    squeezed = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if squeezed:
        g = g.sum(axis=squeezed, keepdims=True)
    return g


def _count(adds: int = 0, muls: int = 0) -> None:
    counter = active_counter()
    if counter is not None:
        counter.adds += adds
        counter.muls += muls


# -- elementwise -------------------------------------------------------


def add(a, b) -> DiffArray:
    a, b = _coerce(a), _coerce(b)
    out = DiffArray(a.data + b.data)
    _count(adds=out.size)
    return _finish(
        out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape))
    )


def sub(a, b) -> DiffArray:
    a, b = _coerce(a), _coerce(b)
    out = DiffArray(a.data - b.data)
    _count(adds=out.size)
    return _finish(
        out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape))
    )


def mul(a, b) -> DiffArray:
    a, b = _coerce(a), _coerce(b)
    out = DiffArray(a.data * b.data)
    _count(muls=out.size)

    def backward(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return _finish(out, (a, b), backward)


def neg(a) -> DiffArray:
    a = _coerce(a)
    out = DiffArray(-a.data)
    _count(muls=out.size)
    return _finish(out, (a,), lambda g: (-g,))


_ELEMENTWISE = {"add": add, "sub": sub, "mul": mul}


def elementwise(a, b, op: str) -> DiffArray:
    """Dispatch form of the binary elementwise ops: op in {add, sub, mul}."""
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise ValueError(f"unknown elementwise op {op!r}; expected add, sub or mul") from None
    return fn(a, b)


# -- matmul ------------------------------------------------------------


def matmul(a, b) -> DiffArray:
    """Matrix product with numpy's batched broadcasting over leading axes."""
    a, b = _coerce(a), _coerce(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs 2-D or higher operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dimensions disagree: {a.shape} vs {b.shape}")
    out = DiffArray(a.data @ b.data)
    batch = int(np.prod(out.shape[:-2], dtype=np.int64)) if out.ndim > 2 else 1
    m, n = out.shape[-2], out.shape[-1]
    k = a.shape[-1]
    _count(adds=batch * m * n * (k - 1), muls=batch * m * n * k)

    def backward(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape)
        if b.requires_grad:
            gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape)
        return ga, gb

    return _finish(out, (a, b), backward)


# -- reductions --------------------------------------------------------


def _axis_tuple(axis, ndim: int) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % ndim for ax in axis)


def reduce_sum(x, axis=None, keepdims: bool = False) -> DiffArray:
    x = _coerce(x)
    axes = _axis_tuple(axis, x.ndim)
    out = DiffArray(x.data.sum(axis=axes, keepdims=keepdims))
    reduced = max(x.size // max(out.size, 1), 1)
    _count(adds=(reduced - 1) * out.size)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, x.shape),)

    return _finish(out, (x,), backward)


def reduce_mean(x, axis=None, keepdims: bool = False) -> DiffArray:
    x = _coerce(x)
    axes = _axis_tuple(axis, x.ndim)
    count = int(np.prod([x.shape[ax] for ax in axes], dtype=np.int64))
    out = DiffArray(x.data.mean(axis=axes, keepdims=keepdims))
    _count(adds=(count - 1) * out.size, muls=out.size)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / count, x.shape),)

    return _finish(out, (x,), backward)


_REDUCE = {"sum": reduce_sum, "mean": reduce_mean}


def reduce(x, axis=None, op: str = "sum", keepdims: bool = False) -> DiffArray:
    """Dispatch form of the reductions: op in {sum, mean}."""
    try:
        fn = _REDUCE[op]
    except KeyError:
        raise ValueError(f"unknown reduce op {op!r}; expected sum or mean") from None
    return fn(x, axis, keepdims)


# -- softmax -----------------------------------------------------------


def softmax_along(x, axis: int) -> DiffArray:
    """Max-stabilized softmax along ``axis``; slices sum to 1."""
    x = _coerce(x)
    ax = axis % x.ndim
    width = x.shape[ax]
    if width == 0:
        raise ShapeError(f"softmax along an empty axis {axis} of shape {x.shape}")
    moved = np.ascontiguousarray(np.moveaxis(x.data, ax, -1))
    rows = moved.reshape(-1, width)
    y_rows = kernels.softmax_lastaxis_fwd(rows)
    out = DiffArray(np.moveaxis(y_rows.reshape(moved.shape), -1, ax))
    slices = x.size // width
    _count(adds=x.size + (width - 1) * slices, muls=2 * x.size)

    def backward(g):
        g_rows = np.ascontiguousarray(np.moveaxis(g, ax, -1)).reshape(-1, width)
        gx = kernels.softmax_lastaxis_bwd(y_rows, g_rows)
        return (np.moveaxis(gx.reshape(moved.shape), -1, ax),)

    return _finish(out, (x,), backward)


# -- neural-net pointwise ----------------------------------------------


def gelu(x) -> DiffArray:
    """GELU activation (tanh form)."""
    x = _coerce(x)
    out = DiffArray(kernels.gelu_fwd(x.data))
    _count(adds=2 * x.size, muls=7 * x.size)
    return _finish(out, (x,), lambda g: (kernels.gelu_bwd(x.data, g),))


def layer_norm(x, eps: float = 1e-5) -> DiffArray:
    """Normalize the last axis to zero mean and unit variance (no affine)."""
    x = _coerce(x)
    width = x.shape[-1]
    rows = np.ascontiguousarray(x.data.reshape(-1, width))
    y_rows, rstd = kernels.layernorm_lastaxis_fwd(rows, eps)
    out = DiffArray(y_rows.reshape(x.shape))
    n_rows = x.size // width
    _count(adds=n_rows * (3 * width - 1), muls=n_rows * (2 * width + 5))

    def backward(g):
        g_rows = np.ascontiguousarray(g.reshape(-1, width))
        gx = kernels.layernorm_lastaxis_bwd(y_rows, rstd, g_rows)
        return (gx.reshape(x.shape),)

    return _finish(out, (x,), backward)


def dropout(x, rate: float, rng: np.random.Generator) -> DiffArray:
    """Inverted dropout; identity when rate is 0."""
    x = _coerce(x)
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if rate == 0.0:
        return x
    keep = (rng.random(x.shape) >= rate).astype(np.float64)
    scale = 1.0 / (1.0 - rate)
    out = DiffArray(x.data * keep * scale)
    _count(muls=2 * x.size)
    return _finish(out, (x,), lambda g: (g * keep * scale,))


# -- shape manipulation ------------------------------------------------


def transpose(x, axes: Sequence[int] | None = None) -> DiffArray:
    x = _coerce(x)
    out = DiffArray(np.transpose(x.data, axes))
    if axes is None:
        inverse = None
    else:
        inverse = np.argsort(axes)
    return _finish(out, (x,), lambda g: (np.transpose(g, inverse),))


def reshape(x, shape: Sequence[int]) -> DiffArray:
    x = _coerce(x)
    try:
        out = DiffArray(x.data.reshape(shape))
    except ValueError as exc:
        raise ShapeError(f"cannot reshape {x.shape} to {tuple(shape)}") from exc
    return _finish(out, (x,), lambda g: (g.reshape(x.shape),))


def concat(arrays: Iterable[DiffArray], axis: int = 0) -> DiffArray:
    parts = [_coerce(a) for a in arrays]
    if not parts:
        raise ShapeError("concat of an empty sequence")
    ref = parts[0].shape
    ax = axis % parts[0].ndim
    for p in parts[1:]:
        if len(p.shape) != len(ref) or any(
            i != ax and s != r for i, (s, r) in enumerate(zip(p.shape, ref))
        ):
            raise ShapeError(f"concat shapes incompatible along axis {axis}: {ref} vs {p.shape}")
    out = DiffArray(np.concatenate([p.data for p in parts], axis=ax))
    sizes = [p.shape[ax] for p in parts]
    bounds = np.cumsum([0] + sizes)

    def backward(g):
        return tuple(
            np.take(g, range(bounds[i], bounds[i + 1]), axis=ax) for i in range(len(parts))
        )

    return _finish(out, parts, backward)


def slice_(x, key) -> DiffArray:
    """Basic slicing (ints and slices only); backward scatters into zeros."""
    x = _coerce(x)
    out = DiffArray(x.data[key])

    def backward(g):
        gx = np.zeros(x.shape, dtype=np.float64)
        gx[key] = g
        return (gx,)

    return _finish(out, (x,), backward)
