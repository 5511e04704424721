"""Reverse-mode tape and the optional operation counter.

The engine is define-by-run: while a ``Tape`` is active (used as a context
manager), every differentiable operation appends a record with the ids of
its parents and a closure that maps the output gradient to parent
gradients. Records are appended in execution order, so the list is already
topologically sorted and ``backward`` is a single reverse sweep.

An ``OpCounter`` can be active with or without a tape; operations report
their scalar add/multiply counts to it. Counts are exact functions of the
operand shapes, which makes complexity measurements immune to timer noise.
"""

from __future__ import annotations

import threading

import numpy as np

from ..errors import TapeError

_state = threading.local()


def active_tape():
    """The tape currently recording in this thread, or None."""
    return getattr(_state, "tape", None)


def active_counter():
    """The operation counter currently active in this thread, or None."""
    return getattr(_state, "counter", None)


class OpCounter:
    """Tallies scalar additions and multiplications of executed ops.

    Transcendental calls (exp, tanh, sqrt, reciprocal) are charged as one
    multiply each; comparisons and data movement are free. The absolute
    constants matter less than the fact that the same cost model applies to
    every mechanism being compared.
    """

    __slots__ = ("adds", "muls", "_prev")

    def __init__(self):
        self.adds = 0
        self.muls = 0
        self._prev = None

    @property
    def total(self) -> int:
        return self.adds + self.muls

    def __enter__(self) -> "OpCounter":
        self._prev = getattr(_state, "counter", None)
        _state.counter = self
        return self

    def __exit__(self, *exc):
        _state.counter = self._prev
        self._prev = None
        return False


class Tape:
    """Ordered record of operations for one backward pass.

    Usage::

        with Tape() as tape:
            loss = ...           # ops on DiffArrays are recorded
        tape.backward(loss)      # populates .grad on reachable leaves

    A tape may be consumed once; ``reset()`` re-arms it. Arrays participate
    in one tape at a time: using a parameter under a new tape re-registers
    it there.
    """

    __slots__ = ("_nodes", "_owners", "_next_id", "_spent", "_prev_tape")

    def __init__(self):
        self._nodes = []  # (out_id, parent_ids, backward_fn)
        self._owners = {}  # id -> DiffArray
        self._next_id = 0
        self._spent = False
        self._prev_tape = None

    def __len__(self) -> int:
        return len(self._nodes)

    def __enter__(self) -> "Tape":
        self._prev_tape = getattr(_state, "tape", None)
        _state.tape = self
        return self

    def __exit__(self, *exc):
        _state.tape = self._prev_tape
        self._prev_tape = None
        return False

    def _register(self, arr) -> int:
        if arr._tape is self and arr._tid is not None:
            return arr._tid
        tid = self._next_id
        self._next_id = tid + 1
        arr._tape = self
        arr._tid = tid
        self._owners[tid] = arr
        return tid

    def record(self, out, parents, backward_fn) -> None:
        """Append one operation; parents precede the output by construction."""
        pids = tuple(self._register(p) for p in parents)
        self._nodes.append((self._register(out), pids, backward_fn))

    def reset(self) -> None:
        """Re-arm a consumed tape so backward may run again (grads accumulate)."""
        self._spent = False

    def backward(self, loss, seed_grad: np.ndarray | None = None) -> None:
        """Accumulate d(loss)/d(leaf) into ``.grad`` of every reachable leaf.

        ``loss`` must be a scalar recorded on (or registered with) this
        tape. Intermediate gradients are discarded; only arrays with
        ``requires_grad`` keep theirs.
        """
        if self._spent:
            raise TapeError("tape already consumed by backward; call reset() first")
        if loss._tape is not self or loss._tid is None:
            raise TapeError("loss does not belong to this tape")
        if loss.data.size != 1:
            raise TapeError(f"backward needs a scalar loss, got shape {loss.data.shape}")
        self._spent = True

        grads: dict[int, np.ndarray] = {
            loss._tid: np.ones_like(loss.data)
            if seed_grad is None
            else np.asarray(seed_grad, dtype=np.float64).reshape(loss.data.shape)
        }
        for out_id, parent_ids, backward_fn in reversed(self._nodes):
            g = grads.pop(out_id, None)
            if g is None:
                continue
            for pid, pg in zip(parent_ids, backward_fn(g)):
                if pg is None:
                    continue
                acc = grads.get(pid)
                grads[pid] = pg if acc is None else acc + pg

        for tid, g in grads.items():
            owner = self._owners[tid]
            if owner.requires_grad:
                owner.grad = g if owner.grad is None else owner.grad + g
