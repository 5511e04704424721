"""Ister: seasonal-trend forecasting with multi-scale inverted embedding,
linear-time token attention, and a dual-encoder backbone.

The package is self-contained: models run on the small reverse-mode array
engine in ``ister.engine`` with numpy (or optional compiled) kernels.
"""

__version__ = "0.1.0"

from .model import (  # noqa: E402
    Forecast,
    IsterModel,
    ModelConfig,
    ablation_variant,
    load_checkpoint,
    save_checkpoint,
)

__all__ = [
    "Forecast",
    "IsterModel",
    "ModelConfig",
    "ablation_variant",
    "load_checkpoint",
    "save_checkpoint",
    "__version__",
]
