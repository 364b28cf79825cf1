"""MSB-first bit packing used by the parameter bitstream sections."""

from .errors import FormatError


class BitWriter:
    """Accumulates bits most-significant-first into bytes."""

    def __init__(self):
        self._out = bytearray()
        self._acc = 0
        self._nacc = 0
        self.bit_length = 0

    def write_bit(self, bit):
        self.write_uint(1 if bit else 0, 1)

    def write_uint(self, value, width):
        if width < 0 or value < 0 or value >> width:
            raise ValueError(f"value {value} does not fit in {width} bits")
        self._acc = (self._acc << width) | value
        self._nacc += width
        self.bit_length += width
        while self._nacc >= 8:
            self._nacc -= 8
            self._out.append((self._acc >> self._nacc) & 0xFF)
        self._acc &= (1 << self._nacc) - 1

    def getvalue(self):
        """Returns the packed bytes; the final partial byte is zero padded."""
        out = bytes(self._out)
        if self._nacc:
            out += bytes([(self._acc << (8 - self._nacc)) & 0xFF])
        return out


class BitReader:
    """Reads bits most-significant-first from bytes, bounded by a bit length."""

    def __init__(self, data, bit_length=None):
        self._data = data
        self.bit_length = len(data) * 8 if bit_length is None else bit_length
        if self.bit_length > len(data) * 8:
            raise FormatError("bit length exceeds buffer", field="bit_length")
        self.position = 0

    def read_bit(self):
        return self.read_uint(1)

    def read_uint(self, width):
        if self.position + width > self.bit_length:
            raise FormatError(
                "bit source exhausted", field="param_bits", offset=self.position
            )
        value = 0
        pos = self.position
        for _ in range(width):
            byte = self._data[pos >> 3]
            value = (value << 1) | ((byte >> (7 - (pos & 7))) & 1)
            pos += 1
        self.position = pos
        return value

    def remaining(self):
        return self.bit_length - self.position
