"""Byte-oriented range coder with 16-bit fixed-point frequencies.

Carry-less design: 64-bit state, bytes emitted big-endian from the top of
`low`. A byte leaves the state once the whole interval shares it; when the
interval straddles a byte boundary and drops below BOT, the range is clipped
to the lower side so a carry can never propagate into emitted bytes. BOT is
2^32 (not the customary emission threshold >> 8), which makes the clip event
rare enough (~2^-24 per byte) to keep redundancy far below a thousandth of a
bit per symbol while r = range >> 16 still carries 16 bits of headroom over
the frequency precision.

Frequency tables hold integer slot counts summing to exactly 2^16, built from
pmf tables by largest-remainder apportionment with a minimum of one slot per
symbol, so encoder and decoder agree bit-exactly on both sides of a file.

The flush rounds `low` up to the next multiple of 2^32 inside the final
interval and emits the four bytes above that alignment, so every stream ends
with exactly four flush bytes; the decoder feeds zeros past the end, which
reproduces the flushed value.
"""

from dataclasses import dataclass
from itertools import groupby

import numpy as np

from .errors import AlphabetError, CapacityError, DecodeError, ShapeError

PRECISION_BITS = 16
TOTAL = 1 << PRECISION_BITS
_MASK64 = (1 << 64) - 1
_TOP = 1 << 56
_BOT = 1 << 32
_FLUSH_BYTES = 4


@dataclass(frozen=True, eq=False)
class FrequencyTable:
    """Integer symbol frequencies summing to exactly TOTAL (2^16)."""

    alphabet_lo: int
    freqs: np.ndarray  # int64, one slot count per real symbol

    def __post_init__(self):
        freqs = np.asarray(self.freqs, dtype=np.int64)
        object.__setattr__(self, "freqs", freqs)
        if freqs.ndim != 1 or freqs.size == 0:
            raise ShapeError("freqs must be a non-empty 1-d array")
        if freqs.size > TOTAL:
            raise CapacityError(f"{freqs.size} symbols exceed {TOTAL} slots")
        if freqs.min() < 1:
            raise CapacityError("every symbol needs at least one slot")
        # A single-symbol alphabet is widened with a phantom symbol at the
        # minimum frequency so the coder always has two choices.
        widened = freqs.size == 1
        object.__setattr__(self, "_widened", widened)
        total = int(freqs.sum()) + (1 if widened else 0)
        if total != TOTAL:
            raise CapacityError(f"slot counts sum to {total}, want {TOTAL}")
        cum = [0]
        for f in freqs.tolist():
            cum.append(cum[-1] + int(f))
        if widened:
            cum.append(TOTAL)
        object.__setattr__(self, "_cum", cum)

    @property
    def symbol_count(self):
        return int(self.freqs.size)


def pmf_to_freq(pmf):
    """Apportions TOTAL slots to a pmf table by largest remainder.

    Every symbol keeps at least one slot; the slots taken for that are
    recovered from the currently largest counts, so the result is
    deterministic.
    """
    probs = pmf.probs
    n = probs.size
    if n > TOTAL:
        raise CapacityError(f"alphabet of {n} symbols exceeds {TOTAL} slots")
    if n == 1:
        # widened table: the phantom symbol takes the last slot
        return FrequencyTable(pmf.alphabet_lo, np.array([TOTAL - 1]))
    raw = probs * TOTAL
    base = np.floor(raw).astype(np.int64)
    deficit = TOTAL - int(base.sum())
    if deficit < 0:
        # pmf sums a hair above 1; shave the largest counts.
        while deficit < 0:
            base[int(np.argmax(base))] -= 1
            deficit += 1
    elif deficit > 0:
        order = np.argsort(-(raw - base), kind="stable")
        base[order[:deficit]] += 1
    for i in np.flatnonzero(base == 0):
        donor = int(np.argmax(base))
        base[donor] -= 1
        base[i] = 1
    return FrequencyTable(pmf.alphabet_lo, base)


@dataclass(frozen=True)
class EncodedStream:
    """Finished range-coded bytes plus the symbol count they carry."""

    data: bytes
    symbol_count: int

    def __post_init__(self):
        if self.symbol_count < 0:
            raise ShapeError("symbol_count must be non-negative")

    @property
    def bit_length(self):
        return len(self.data) * 8


class RangeEncoder:
    """Streaming encoder; encode symbol indices run by run, then finish()."""

    def __init__(self):
        self._low = 0
        self._range = _MASK64
        self._out = bytearray()

    def encode_run(self, indices, table):
        cum = table._cum
        low = self._low
        rng = self._range
        out = self._out
        top = _TOP
        bot = _BOT
        mask = _MASK64
        for s in indices:
            r = rng >> 16
            c = cum[s]
            low += c * r
            rng = (cum[s + 1] - c) * r
            while True:
                if (low ^ (low + rng)) < top:
                    pass  # top byte settled for the whole interval
                elif rng < bot:
                    rng = (-low) & (bot - 1)  # clip below the byte boundary
                else:
                    break
                out.append((low >> 56) & 0xFF)
                low = (low << 8) & mask
                rng <<= 8
        self._low = low
        self._range = rng

    def finish(self):
        # range >= BOT here, so the next multiple of BOT lies inside the
        # interval; emitting its top four bytes pins the value exactly.
        low = self._low + ((-self._low) & (_BOT - 1))
        for shift in (56, 48, 40, 32):
            self._out.append((low >> shift) & 0xFF)
        return bytes(self._out)


class RangeDecoder:
    """Mirrors RangeEncoder; feeds zero bytes past the end of the stream."""

    def __init__(self, data):
        self._data = data
        self._pos = 0
        self._low = 0
        self._range = _MASK64
        code = 0
        for _ in range(8):
            code <<= 8
            if self._pos < len(data):
                code |= data[self._pos]
            self._pos += 1
        self._code = code

    def decode_run(self, count, table):
        from bisect import bisect_right

        cum = table._cum
        limit = table.symbol_count
        data = self._data
        dlen = len(data)
        pos = self._pos
        low = self._low
        rng = self._range
        code = self._code
        top = _TOP
        bot = _BOT
        mask = _MASK64
        out = []
        append = out.append
        for _ in range(count):
            r = rng >> 16
            target = (code - low) // r
            if target > TOTAL - 1:
                target = TOTAL - 1
            s = bisect_right(cum, target) - 1
            if s >= limit:
                raise DecodeError("stream decodes a phantom symbol", position=pos)
            c = cum[s]
            low += c * r
            rng = (cum[s + 1] - c) * r
            append(s)
            while True:
                if (low ^ (low + rng)) < top:
                    pass
                elif rng < bot:
                    rng = (-low) & (bot - 1)
                else:
                    break
                code = ((code << 8) | (data[pos] if pos < dlen else 0)) & mask
                pos += 1
                low = (low << 8) & mask
                rng <<= 8
        self._pos = pos
        self._low = low
        self._range = rng
        self._code = code
        return out


def _runs(symbols, tables):
    n = len(symbols)
    if isinstance(tables, FrequencyTable):
        if n:
            yield 0, n, tables
        return
    if len(tables) != n:
        raise ShapeError(f"{len(tables)} tables for {n} symbols")
    start = 0
    for _, group in groupby(tables, key=id):
        length = sum(1 for _ in group)
        yield start, start + length, tables[start]
        start += length


def range_encode(symbols, tables):
    """Encodes symbol values with a per-symbol FrequencyTable schedule.

    `tables` is either one table applied to every symbol or a sequence with
    one entry per symbol; consecutive identical entries are coded as a run.
    """
    symbols = np.asarray(symbols, dtype=np.int64)
    if symbols.ndim != 1:
        raise ShapeError("symbols must be 1-d")
    encoder = RangeEncoder()
    for start, stop, table in _runs(symbols, tables):
        idx = symbols[start:stop] - table.alphabet_lo
        if idx.size and (idx.min() < 0 or idx.max() >= table.symbol_count):
            raise AlphabetError("symbol outside the frequency table alphabet")
        encoder.encode_run(idx.tolist(), table)
    return EncodedStream(encoder.finish(), int(symbols.size))


def range_decode(stream, tables):
    """Inverse of range_encode; returns the symbol values as int64."""
    if len(stream.data) < _FLUSH_BYTES:
        raise DecodeError("stream truncated", position=len(stream.data))
    decoder = RangeDecoder(stream.data)
    out = np.empty(stream.symbol_count, dtype=np.int64)
    consumed = 0
    for start, stop, table in _runs(out, tables):
        idx = decoder.decode_run(stop - start, table)
        out[start:stop] = np.asarray(idx, dtype=np.int64) + table.alphabet_lo
        consumed = stop
    if consumed != stream.symbol_count:
        raise ShapeError("table schedule shorter than the symbol count")
    return out
