"""Kernel backend selection.

The hot inner loops (softmax, GELU, layer norm, moving average, Adam) exist
twice: compiled Cython in ``_ckernels`` and plain numpy in ``pykernels``.
At import time the compiled module is preferred when present; the
environment variable ``ISTER_KERNELS`` overrides the choice:

    ISTER_KERNELS=python    force the numpy backend
    ISTER_KERNELS=compiled  require the C backend, fail loudly if missing
    ISTER_KERNELS=auto      default behaviour

Callers import this package and use the re-exported functions; they must
look them up through the module (``kernels.gelu_fwd``) rather than binding
them locally, so that ``set_backend`` can swap implementations for
benchmarking.
"""

from __future__ import annotations

import os

from . import pykernels

_FUNCTIONS = (
    "softmax_lastaxis_fwd",
    "softmax_lastaxis_bwd",
    "gelu_fwd",
    "gelu_bwd",
    "layernorm_lastaxis_fwd",
    "layernorm_lastaxis_bwd",
    "moving_average_replicate",
    "adam_update",
)

__all__ = list(_FUNCTIONS) + ["get_backend", "set_backend", "available_backends"]

try:
    from . import _ckernels
except ImportError:
    _ckernels = None

_active = pykernels


def available_backends() -> tuple[str, ...]:
    """Names of the backends importable in this environment."""
    names = ["python"]
    if _ckernels is not None:
        names.insert(0, "compiled")
    return tuple(names)


def get_backend() -> str:
    """Name of the backend currently bound."""
    return _active.BACKEND


def set_backend(name: str) -> str:
    """Bind the named backend ("python" or "compiled") and return its name."""
    global _active
    if name in ("auto", ""):
        name = "compiled" if _ckernels is not None else "python"
    if name == "python":
        _active = pykernels
    elif name == "compiled":
        if _ckernels is None:
            raise ImportError(
                "compiled kernels requested but ister.kernels._ckernels is not built"
            )
        _active = _ckernels
    else:
        raise ValueError(f"unknown kernel backend {name!r}")
    g = globals()
    for fn in _FUNCTIONS:
        g[fn] = getattr(_active, fn)
    return get_backend()


set_backend(os.environ.get("ISTER_KERNELS", "auto"))
