"""Named parameter storage.

Weights are never shipped inside a bitstream.  Each tensor is drawn from a
Philox generator keyed by ``(seed, name)``, so encoder and decoder rebuild
identical parameters from the seed alone.  Values are rounded to float32 on
creation; saving and loading a store is therefore lossless.

File layout (little-endian)::

    b"HPCMW" | version u16 | count u32 |
    per entry: name_len u16 | utf-8 name | rank u8 | dims u32 * rank | float32 data
"""

from __future__ import annotations

import hashlib
import struct
from pathlib import Path

import numpy as np

from .errors import WeightError

MAGIC = b"HPCMW"
FORMAT_VERSION = 1


def _philox(seed: int, name: str) -> np.random.Generator:
    digest = hashlib.blake2b(struct.pack("<Q", seed) + name.encode("utf-8"), digest_size=16).digest()
    return np.random.Generator(np.random.Philox(key=int.from_bytes(digest, "little")))


class WeightStore:
    """Mapping of parameter name to float32 tensor.

    A store built with :meth:`from_seed` materialises parameters on first
    request.  A store loaded from a file is closed: requesting a name it does
    not hold raises :class:`WeightError`.
    """

    def __init__(self, seed: int = 0, entries: dict[str, np.ndarray] | None = None, lazy: bool = True):
        if not 0 <= seed < 2**64:
            raise WeightError(f"seed {seed} outside u64")
        self.seed = int(seed)
        self.entries: dict[str, np.ndarray] = dict(entries or {})
        self.lazy = lazy
        self.format_version = FORMAT_VERSION

    @classmethod
    def from_seed(cls, seed: int) -> "WeightStore":
        return cls(seed, lazy=True)

    def __contains__(self, name: str) -> bool:
        return name in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def require(self, name: str, shape, init: str = "normal", fan_in: int | None = None,
                value: float = 0.0) -> np.ndarray:
        """Return parameter ``name``, creating it from the seed if the store is lazy.

        ``init`` is ``"normal"`` (standard normal scaled by ``1/sqrt(fan_in)``),
        ``"const"`` (every element equal to ``value``) or ``"uniform"`` (U[0, 1)).
        """
        shape = tuple(int(s) for s in shape)
        if name in self.entries:
            arr = self.entries[name]
            if arr.shape != shape:
                raise WeightError(f"{name}: stored shape {arr.shape}, requested {shape}")
            return arr.astype(np.float64)
        if not self.lazy:
            raise WeightError(f"missing parameter {name!r}")
        if init == "normal":
            scale = 1.0 / np.sqrt(fan_in if fan_in else max(int(np.prod(shape[1:])), 1))
            data = _philox(self.seed, name).standard_normal(shape) * scale
        elif init == "uniform":
            data = _philox(self.seed, name).random(shape)
        elif init == "const":
            data = np.full(shape, value)
        else:
            raise WeightError(f"unknown init {init!r}")
        arr = data.astype(np.float32)
        arr.setflags(write=False)
        self.entries[name] = arr
        return arr.astype(np.float64)

    def set(self, name: str, value) -> None:
        arr = np.asarray(value, dtype=np.float32).copy()
        arr.setflags(write=False)
        self.entries[name] = arr

    def parameter_count(self, prefix: str = "") -> int:
        return sum(a.size for n, a in self.entries.items() if n.startswith(prefix))

    def to_bytes(self) -> bytes:
        parts = [MAGIC, struct.pack("<HI", self.format_version, len(self.entries))]
        for name in sorted(self.entries):
            arr = self.entries[name]
            raw = name.encode("utf-8")
            parts.append(struct.pack("<H", len(raw)) + raw)
            parts.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
            parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, data: bytes, seed: int = 0) -> "WeightStore":
        if data[:5] != MAGIC:
            raise WeightError("not a weight file (bad magic)")
        try:
            version, count = struct.unpack_from("<HI", data, 5)
            if version != FORMAT_VERSION:
                raise WeightError(f"unsupported weight format version {version}")
            pos = 11
            entries = {}
            for _ in range(count):
                (nlen,) = struct.unpack_from("<H", data, pos)
                pos += 2
                name = data[pos:pos + nlen].decode("utf-8")
                pos += nlen
                (rank,) = struct.unpack_from("<B", data, pos)
                pos += 1
                dims = struct.unpack_from(f"<{rank}I", data, pos)
                pos += 4 * rank
                size = int(np.prod(dims)) if rank else 1
                arr = np.frombuffer(data, dtype="<f4", count=size, offset=pos).reshape(dims).astype(np.float32)
                pos += 4 * size
                arr.setflags(write=False)
                entries[name] = arr
        except (struct.error, ValueError) as exc:
            raise WeightError(f"truncated weight file: {exc}") from exc
        if pos != len(data):
            raise WeightError(f"{len(data) - pos} trailing bytes in weight file")
        return cls(seed, entries, lazy=False)

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path, seed: int = 0) -> "WeightStore":
        return cls.from_bytes(Path(path).read_bytes(), seed)
