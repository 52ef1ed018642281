"""From-scratch differentiable layers and the forecasting model zoo."""

from .layers import (
    LSTM,
    Dense,
    Dropout,
    GatedFusion,
    MeanPool,
    ScaledDotAttention,
    cross_attention,
    scaled_dot_attention,
    self_attention,
)
from .models import VARIANTS, Model, ModelSpec
from .checkpoint import load_checkpoint, save_checkpoint

__all__ = [
    "LSTM",
    "Dense",
    "Dropout",
    "GatedFusion",
    "MeanPool",
    "ScaledDotAttention",
    "scaled_dot_attention",
    "self_attention",
    "cross_attention",
    "VARIANTS",
    "Model",
    "ModelSpec",
    "save_checkpoint",
    "load_checkpoint",
]
