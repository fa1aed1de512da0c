"""Lossless latent-tensor codec with multi-scale, step-wise context modelling."""

from .codec import CodecConfig, decode_latents, encode_latents, rate_report, toy_transform_roundtrip
from .context import ContextConfig
from .errors import (CoderContractError, ConfigError, CorruptBitstreamError, HpcmError,
                     IncompatibleStreamError, ShapeError, WeightError)
from .schedule import build_schedule

__all__ = [
    "CodecConfig", "ContextConfig", "build_schedule", "encode_latents", "decode_latents",
    "rate_report", "toy_transform_roundtrip", "HpcmError", "ConfigError", "ShapeError",
    "WeightError", "CorruptBitstreamError", "IncompatibleStreamError", "CoderContractError",
]
