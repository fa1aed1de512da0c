"""Byte-oriented range coder over 16-bit cumulative frequency tables.

State is a 32-bit ``low`` (plus one carry bit) and a 32-bit ``range``.  A
symbol with cumulative bounds ``[cum, cum + freq)`` narrows the interval to
``[low + range*cum >> 16, low + range*(cum+freq) >> 16)``; multiplying before
shifting keeps the coding loss far below one bit per session.  Whenever the
range drops below ``2**24`` one byte is shifted out.  Carries are resolved
with a pending-byte cache: the most recent non-0xFF byte is held back together
with a count of 0xFF bytes that a carry would flip to 0x00.

The encoder emits exactly one byte per renormalisation plus a fixed 4-byte
flush, and the decoder primes with 4 bytes and reads one per renormalisation,
so a well-formed stream is consumed to the last byte.
"""

from __future__ import annotations

from bisect import bisect_right

from .errors import CoderContractError, CorruptBitstreamError

PRECISION = 16
TOP = 1 << 24
MASK32 = 0xFFFFFFFF
FLUSH_BYTES = 4


class RangeEncoder:
    def __init__(self):
        self.low = 0
        self.range = MASK32
        self._cache: int | None = None
        self._pending = 0
        self._out = bytearray()
        self._finished = False

    def __len__(self) -> int:
        return len(self._out)

    def _shift_low(self) -> None:
        low = self.low
        if low < 0xFF000000 or low > MASK32:
            carry = low >> 32
            if self._cache is not None:
                self._out.append((self._cache + carry) & 0xFF)
            if self._pending:
                self._out.extend(bytes([(0xFF + carry) & 0xFF]) * self._pending)
                self._pending = 0
            self._cache = (low >> 24) & 0xFF
        else:
            self._pending += 1
        self.low = (low << 8) & MASK32

    def encode(self, cum: int, freq: int) -> None:
        """Narrow the interval to ``[cum, cum + freq)`` out of ``2**16``."""
        if self._finished:
            raise CoderContractError("encoder already finalized")
        if freq <= 0:
            raise CoderContractError("zero-frequency symbol")
        r = self.range
        lo = (r * cum) >> PRECISION
        hi = (r * (cum + freq)) >> PRECISION
        self.low += lo
        self.range = hi - lo
        while self.range < TOP:
            self.range <<= 8
            self._shift_low()

    def encode_symbol(self, symbol: int, cum_freq) -> None:
        self.encode(cum_freq[symbol], cum_freq[symbol + 1] - cum_freq[symbol])

    def encode_bits(self, value: int, nbits: int) -> None:
        """Raw bits, most significant byte first, as uniform 8-bit symbols."""
        for shift in range(nbits - 8, -1, -8):
            self.encode(((value >> shift) & 0xFF) << 8, 256)

    def finalize(self) -> bytes:
        if self._finished:
            raise CoderContractError("finalize called twice")
        self._finished = True
        for _ in range(FLUSH_BYTES + 1):
            self._shift_low()
        return bytes(self._out)


class RangeDecoder:
    def __init__(self, data: bytes):
        if len(data) < FLUSH_BYTES:
            raise CorruptBitstreamError(f"segment of {len(data)} bytes is shorter than the {FLUSH_BYTES}-byte window")
        self._data = bytes(data)
        self._pos = FLUSH_BYTES
        self.code = int.from_bytes(self._data[:FLUSH_BYTES], "big")
        self.range = MASK32

    @property
    def position(self) -> int:
        return self._pos

    def _next_byte(self) -> int:
        if self._pos >= len(self._data):
            raise CorruptBitstreamError("read past end of segment")
        b = self._data[self._pos]
        self._pos += 1
        return b

    def _target(self) -> int:
        if self.code >= self.range:
            raise CorruptBitstreamError("decoder state out of interval")
        return ((((self.code + 1) << PRECISION) - 1) // self.range)

    def _consume(self, cum: int, freq: int) -> None:
        r = self.range
        lo = (r * cum) >> PRECISION
        hi = (r * (cum + freq)) >> PRECISION
        self.code -= lo
        self.range = hi - lo
        while self.range < TOP:
            self.range <<= 8
            self.code = ((self.code << 8) | self._next_byte()) & MASK32

    def decode_symbol(self, cum_freq) -> int:
        target = self._target()
        # cum_freq[s] <= target < cum_freq[s + 1]; code < range keeps target < 2**16
        s = bisect_right(cum_freq, target) - 1
        if not 0 <= s < len(cum_freq) - 1:
            raise CorruptBitstreamError("no symbol covers the decoder target")
        self._consume(cum_freq[s], cum_freq[s + 1] - cum_freq[s])
        return s

    def decode_bits(self, nbits: int) -> int:
        value = 0
        for _ in range(nbits // 8):
            target = self._target()
            b = min(target >> 8, 255)
            self._consume(b << 8, 256)
            value = (value << 8) | b
        return value

    def finish(self) -> None:
        """Assert the whole segment was consumed."""
        if self._pos != len(self._data):
            raise CorruptBitstreamError(f"{len(self._data) - self._pos} unconsumed bytes in segment")
