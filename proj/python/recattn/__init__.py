"""Reciprocal-attention salient object detection (desk-scale, float64)."""

from ._core import (
    ConfigError,
    NonFiniteLoss,
    ShapeError,
    config_keys,
    default_config,
    evaluate,
    f_adaptive,
    f_measure_at,
    f_weighted,
    fuse,
    generate,
    gradcheck,
    infer,
    mae,
    read_image,
    train,
)

__all__ = [
    "ConfigError",
    "NonFiniteLoss",
    "ShapeError",
    "config_keys",
    "default_config",
    "evaluate",
    "f_adaptive",
    "f_measure_at",
    "f_weighted",
    "fuse",
    "generate",
    "gradcheck",
    "infer",
    "mae",
    "read_image",
    "train",
]
__version__ = "0.1.0"
