"""Adaptive order-0 arithmetic coding for the prompt side-channel.

Bit-exact format: 257-symbol alphabet (256 byte values + explicit
end-of-stream symbol 256), all frequencies initialized to 1, coded symbol's
frequency incremented by 32, whole table halved (rounding up, so counts stay
>= 1) whenever the total reaches 2^16, and 32-bit integer range
renormalization in the classic low/high/underflow style. The encoder
terminates the stream with a single disambiguation '1' bit; the decoder may
consume a bounded number of phantom zero bits past the end of input.
"""

from __future__ import annotations

import numpy as np

from .errors import DecodeError, FrameError

ALPHABET = 257
EOF_SYMBOL = 256
INCREMENT = 32
HALVE_AT = 1 << 16
MAX_TEXT_BYTES = (1 << 16) - 1

_STATE_BITS = 32
_MASK = (1 << _STATE_BITS) - 1
_TOP = 1 << (_STATE_BITS - 1)
_SECOND = _TOP >> 1
_PHANTOM_BUDGET = 64


class AdaptiveByteModel:
    """Cumulative frequency table over bytes plus the end marker."""

    def __init__(self):
        self.freqs = np.ones(ALPHABET, dtype=np.int64)

    def cumulative(self) -> np.ndarray:
        cum = np.empty(ALPHABET + 1, dtype=np.int64)
        cum[0] = 0
        np.cumsum(self.freqs, out=cum[1:])
        return cum

    def update(self, symbol: int) -> None:
        self.freqs[symbol] += INCREMENT
        if int(self.freqs.sum()) >= HALVE_AT:
            self.freqs = (self.freqs + 1) // 2


class _RangeCoder:
    def __init__(self):
        self.low = 0
        self.high = _MASK

    def _narrow(self, cum: np.ndarray, symbol: int) -> None:
        total = int(cum[-1])
        span = self.high - self.low + 1
        new_low = self.low + int(cum[symbol]) * span // total
        new_high = self.low + int(cum[symbol + 1]) * span // total - 1
        self.low, self.high = new_low, new_high
        while ((self.low ^ self.high) & _TOP) == 0:
            self._shift()
            self.low = (self.low << 1) & _MASK
            self.high = ((self.high << 1) & _MASK) | 1
        while (self.low & ~self.high & _SECOND) != 0:
            self._underflow()
            self.low = (self.low << 1) & (_MASK >> 1)
            self.high = ((self.high << 1) & (_MASK >> 1)) | _TOP | 1

    def _shift(self):
        raise NotImplementedError

    def _underflow(self):
        raise NotImplementedError


class _Encoder(_RangeCoder):
    def __init__(self):
        super().__init__()
        self.bits: list[int] = []
        self.pending = 0

    def encode(self, cum: np.ndarray, symbol: int) -> None:
        self._narrow(cum, symbol)

    def finish(self) -> None:
        self.bits.append(1)

    def _shift(self):
        bit = self.low >> (_STATE_BITS - 1)
        self.bits.append(bit)
        self.bits.extend([bit ^ 1] * self.pending)
        self.pending = 0

    def _underflow(self):
        self.pending += 1


class _Decoder(_RangeCoder):
    def __init__(self, bits: np.ndarray):
        super().__init__()
        self.bits = bits
        self.pos = 0
        self.phantom = 0
        self.code = 0
        for _ in range(_STATE_BITS):
            self.code = (self.code << 1) | self._read_bit()

    def _read_bit(self) -> int:
        if self.pos < len(self.bits):
            bit = int(self.bits[self.pos])
            self.pos += 1
            return bit
        self.phantom += 1
        if self.phantom > _PHANTOM_BUDGET:
            raise DecodeError("bitstream exhausted before end-of-stream symbol")
        return 0

    def decode(self, cum: np.ndarray) -> int:
        total = int(cum[-1])
        span = self.high - self.low + 1
        value = ((self.code - self.low + 1) * total - 1) // span
        symbol = int(np.searchsorted(cum, value, side="right")) - 1
        self._narrow(cum, symbol)
        return symbol

    def _shift(self):
        self.code = ((self.code << 1) & _MASK) | self._read_bit()

    def _underflow(self):
        self.code = (self.code & _TOP) | ((self.code << 1) & (_MASK >> 1)) | self._read_bit()


def ac_encode(data: bytes) -> np.ndarray:
    """Compress a byte string; returns the bitstream as a 0/1 uint8 array."""
    if len(data) > MAX_TEXT_BYTES:
        raise FrameError(f"input of {len(data)} bytes exceeds {MAX_TEXT_BYTES}")
    model = AdaptiveByteModel()
    enc = _Encoder()
    for byte in data:
        enc.encode(model.cumulative(), byte)
        model.update(byte)
    enc.encode(model.cumulative(), EOF_SYMBOL)
    enc.finish()
    return np.array(enc.bits, dtype=np.uint8)


def ac_decode(bits: np.ndarray, max_bytes: int = MAX_TEXT_BYTES) -> bytes:
    """Inverse of ac_encode. Raises DecodeError on malformed input; never
    reads unboundedly (phantom-bit budget plus an output size cap)."""
    bits = np.asarray(bits)
    model = AdaptiveByteModel()
    dec = _Decoder(bits)
    out = bytearray()
    while True:
        symbol = dec.decode(model.cumulative())
        if symbol == EOF_SYMBOL:
            return bytes(out)
        out.append(symbol)
        if len(out) > max_bytes:
            raise DecodeError(f"decoded size exceeded {max_bytes} bytes")
        model.update(symbol)
