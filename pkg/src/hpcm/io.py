"""Tensor files and synthetic latent fields.

Latent file (little-endian): ``b"HPCL" | C u32 | H u32 | W u32 | int16 data``.
Float file: ``b"HPCF" | C u32 | H u32 | W u32 | float32 data``.
"""

from __future__ import annotations

import math
import struct
from pathlib import Path

import numpy as np

from .errors import ConfigError, CorruptBitstreamError

LATENT_MAGIC = b"HPCL"
FLOAT_MAGIC = b"HPCF"
_DIMS = struct.Struct("<4sIII")

GEN_KINDS = ("uniform", "ar1", "zeros")


def latent_to_bytes(y: np.ndarray) -> bytes:
    y = np.asarray(y)
    if y.ndim != 3:
        raise ConfigError(f"latent must be 3-D, got {y.shape}")
    if y.size and (y.min() < -32768 or y.max() > 32767):
        raise ConfigError("latent values exceed int16")
    return _DIMS.pack(LATENT_MAGIC, *y.shape) + y.astype("<i2").tobytes()


def float_to_bytes(x: np.ndarray) -> bytes:
    x = np.asarray(x)
    if x.ndim != 3:
        raise ConfigError(f"tensor must be 3-D, got {x.shape}")
    return _DIMS.pack(FLOAT_MAGIC, *x.shape) + x.astype("<f4").tobytes()


def _parse(data: bytes, magic: bytes, dtype: str) -> np.ndarray:
    if len(data) < _DIMS.size:
        raise CorruptBitstreamError("file shorter than its header")
    found, c, h, w = _DIMS.unpack_from(data, 0)
    if found != magic:
        raise CorruptBitstreamError(f"bad magic {found!r}, expected {magic!r}")
    count = c * h * w
    itemsize = np.dtype(dtype).itemsize
    if len(data) != _DIMS.size + count * itemsize:
        raise CorruptBitstreamError(f"payload is {len(data) - _DIMS.size} bytes, expected {count * itemsize}")
    return np.frombuffer(data, dtype, count, _DIMS.size).reshape(c, h, w)


def latent_from_bytes(data: bytes) -> np.ndarray:
    return _parse(data, LATENT_MAGIC, "<i2").astype(np.int64)


def float_from_bytes(data: bytes) -> np.ndarray:
    return _parse(data, FLOAT_MAGIC, "<f4").astype(np.float64)


def write_latent(path, y) -> None:
    Path(path).write_bytes(latent_to_bytes(y))


def read_latent(path) -> np.ndarray:
    return latent_from_bytes(Path(path).read_bytes())


def write_float(path, x) -> None:
    Path(path).write_bytes(float_to_bytes(x))


def read_float(path) -> np.ndarray:
    return float_from_bytes(Path(path).read_bytes())


def _ar1_along(x: np.ndarray, axis: int, rho: float) -> np.ndarray:
    x = np.moveaxis(x, axis, 0).copy()
    x[0] /= math.sqrt(1.0 - rho * rho)
    for t in range(1, x.shape[0]):
        x[t] += rho * x[t - 1]
    return np.moveaxis(x, 0, axis)


def generate_latent(kind: str, dims, seed: int = 0, rho: float = 0.9, low: int = -8, high: int = 8) -> np.ndarray:
    """Synthetic integer latents.

    ``uniform``: i.i.d. integers in ``[low, high]``.  ``ar1``: stationary
    separable AR(1) with unit innovations along rows then columns, rounded.
    ``zeros``: all zero.
    """
    c, h, w = (int(d) for d in dims)
    if min(c, h, w) <= 0:
        raise ConfigError(f"dims must be positive, got {dims}")
    rng = np.random.default_rng(seed)
    if kind == "zeros":
        return np.zeros((c, h, w), dtype=np.int64)
    if kind == "uniform":
        return rng.integers(low, high + 1, size=(c, h, w))
    if kind == "ar1":
        if not 0.0 <= rho < 1.0:
            raise ConfigError(f"rho must lie in [0, 1), got {rho}")
        x = _ar1_along(_ar1_along(rng.standard_normal((c, h, w)), 1, rho), 2, rho)
        return np.clip(np.round(x), -32768, 32767).astype(np.int64)
    raise ConfigError(f"unknown kind {kind!r}; expected one of {GEN_KINDS}")
