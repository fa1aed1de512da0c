"""Versioned byte container for one coded latent tensor.

Layout, little-endian::

    b"HPCM" | version u16 | C u32 | H u32 | W u32 | seed u64 |
    allocation code u8 | backend code u8 |
    z_len u32 | z bytes | y_len u32 | y bytes
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from .errors import CorruptBitstreamError

MAGIC = b"HPCM"
VERSION = 1
_HEADER = struct.Struct("<4sHIIIQBB")
HEADER_SIZE = _HEADER.size

BACKEND_CODES = {"hyperprior_only": 0, "analytic_linear": 1, "neural": 2}
BACKEND_NAMES = {v: k for k, v in BACKEND_CODES.items()}


@dataclass(frozen=True)
class Bitstream:
    dims: tuple[int, int, int]
    seed: int
    allocation_code: int
    backend_code: int
    z_segment: bytes
    y_segment: bytes
    version: int = VERSION

    @property
    def backend(self) -> str:
        return BACKEND_NAMES[self.backend_code]

    @property
    def payload_bytes(self) -> int:
        return len(self.z_segment) + len(self.y_segment)

    def to_bytes(self) -> bytes:
        c, h, w = self.dims
        return b"".join([
            _HEADER.pack(MAGIC, self.version, c, h, w, self.seed, self.allocation_code, self.backend_code),
            struct.pack("<I", len(self.z_segment)), self.z_segment,
            struct.pack("<I", len(self.y_segment)), self.y_segment,
        ])

    def __len__(self) -> int:
        return HEADER_SIZE + 8 + self.payload_bytes

    @classmethod
    def from_bytes(cls, data: bytes) -> "Bitstream":
        if len(data) < HEADER_SIZE + 8:
            raise CorruptBitstreamError(f"stream of {len(data)} bytes is shorter than the header")
        magic, version, c, h, w, seed, alloc, backend = _HEADER.unpack_from(data, 0)
        if magic != MAGIC:
            raise CorruptBitstreamError(f"bad magic {magic!r}")
        if version != VERSION:
            raise CorruptBitstreamError(f"unsupported stream version {version}")
        if backend not in BACKEND_NAMES:
            raise CorruptBitstreamError(f"unknown backend code {backend}")
        pos = HEADER_SIZE
        segments = []
        for name in ("z", "y"):
            if pos + 4 > len(data):
                raise CorruptBitstreamError(f"missing {name} segment length")
            (n,) = struct.unpack_from("<I", data, pos)
            pos += 4
            if pos + n > len(data):
                raise CorruptBitstreamError(f"{name} segment truncated ({len(data) - pos} of {n} bytes)")
            segments.append(bytes(data[pos:pos + n]))
            pos += n
        if pos != len(data):
            raise CorruptBitstreamError(f"{len(data) - pos} trailing bytes after y segment")
        return cls((c, h, w), seed, alloc, backend, segments[0], segments[1], version)
