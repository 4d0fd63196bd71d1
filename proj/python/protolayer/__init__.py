"""Prototype-based network layers (LVQ heads, kernel-prototype convolutions)."""

from ._core import (
    ArgumentError,
    ConfigError,
    DataError,
    Error,
    FormatError,
    NumericError,
    ShapeError,
    UsageError,
    extract_windows,
    gen_blobs,
    glvq_loss,
    load_idx,
    proto_conv,
    response_efficient,
    response_naive,
    rslvq_probs,
    train,
    wta,
)

__all__ = [
    "ArgumentError",
    "ConfigError",
    "DataError",
    "Error",
    "FormatError",
    "NumericError",
    "ShapeError",
    "UsageError",
    "extract_windows",
    "gen_blobs",
    "glvq_loss",
    "load_idx",
    "proto_conv",
    "response_efficient",
    "response_naive",
    "rslvq_probs",
    "train",
    "wta",
]
