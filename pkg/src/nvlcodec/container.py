"""On-disk containers: the latent interchange file and the coded bitstream.

Two formats, both little-endian, with bit sequences packed MSB-first:

.nvl (magic NVL1) carries quantized latent tensors plus the shared entropy
model tables both ends own: per-channel side pmf tables and a predefined
scale set per stream kind. It is the input to encoding and the reference
for decode verification.

.nvb (magic NVB1) carries the coded output: a header pinning the coding
configuration (mixture size, replacement budgets, parameter grid tag,
alphabets) and, per frame and present stream, the parameter bit sequence
pb and the latent byte stream lb, each length-prefixed so signaling
overhead can be attributed exactly.

Model tables never travel in the bitstream. Decoding a bitstream needs the
tables from the matching latent container, the same way both ends of a
deployed codec hold one trained model. Both files store a CRC32 of
everything after the 12 byte prologue so corruption is caught before any
payload is interpreted.
"""

import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import (
    AlphabetError,
    CodecError,
    DomainError,
    FormatError,
    ShapeError,
    VersionError,
)
from .latents import GaussianLatentSet, PmfTable, ScaleSet, SymbolTensor
from .reparam import RANGES_VERSION

FORMAT_VERSION = 1
FRAME_KINDS = ("I", "P", "B")

_MAGIC_LATENT = b"NVL1"
_MAGIC_BITSTREAM = b"NVB1"
_KIND_CODES = {"I": 0, "P": 1, "B": 2}
_KIND_NAMES = {code: kind for kind, code in _KIND_CODES.items()}
_I16_MIN, _I16_MAX = -(2 ** 15), 2 ** 15 - 1
_U16_MAX = 2 ** 16 - 1


def _check_i16_alphabet(lo, hi, what):
    if lo > hi:
        raise AlphabetError(f"{what} alphabet_lo {lo} > alphabet_hi {hi}")
    if lo < _I16_MIN or hi > _I16_MAX:
        raise AlphabetError(f"{what} alphabet [{lo}, {hi}] exceeds 16 bit symbol storage")


@dataclass(frozen=True, eq=False)
class StreamModel:
    """Shared entropy-model tables for one stream kind (motion or residual):
    one learned pmf per side channel plus the predefined main scale set."""

    side_pmfs: tuple  # per-channel PmfTable, all over one alphabet
    main_alphabet_lo: int
    main_alphabet_hi: int
    main_scales: ScaleSet

    def __post_init__(self):
        pmfs = tuple(self.side_pmfs)
        object.__setattr__(self, "side_pmfs", pmfs)
        if not pmfs:
            raise ShapeError("stream model needs at least one side pmf")
        if len(pmfs) > _U16_MAX:
            raise ShapeError(f"{len(pmfs)} channels exceed the u16 container field")
        lo, hi = pmfs[0].alphabet_lo, pmfs[0].alphabet_hi
        for pmf in pmfs:
            if (pmf.alphabet_lo, pmf.alphabet_hi) != (lo, hi):
                raise AlphabetError("side pmfs must share one alphabet")
        _check_i16_alphabet(lo, hi, "side")
        _check_i16_alphabet(self.main_alphabet_lo, self.main_alphabet_hi, "main")
        if not isinstance(self.main_scales, ScaleSet):
            raise ShapeError("main_scales must be a ScaleSet")
        if self.main_scales.size > _U16_MAX:
            raise ShapeError(f"{self.main_scales.size} scales exceed the u16 container field")

    @property
    def side_alphabet_lo(self):
        return self.side_pmfs[0].alphabet_lo

    @property
    def side_alphabet_hi(self):
        return self.side_pmfs[0].alphabet_hi

    @property
    def channel_count(self):
        return len(self.side_pmfs)

    def __eq__(self, other):
        if not isinstance(other, StreamModel):
            return NotImplemented
        return (
            self.side_pmfs == other.side_pmfs
            and self.main_alphabet_lo == other.main_alphabet_lo
            and self.main_alphabet_hi == other.main_alphabet_hi
            and self.main_scales == other.main_scales
        )


@dataclass(frozen=True, eq=False)
class LatentFrame:
    """One frame's latents: residual streams always, motion streams only on
    inter frames that carry them."""

    kind: str  # "I", "P" or "B"
    residual_side: SymbolTensor
    residual_main: GaussianLatentSet
    motion_side: SymbolTensor = None
    motion_main: GaussianLatentSet = None

    def __post_init__(self):
        if self.kind not in FRAME_KINDS:
            raise DomainError(f"frame kind must be one of {FRAME_KINDS}, got {self.kind!r}")
        if (self.motion_side is None) != (self.motion_main is None):
            raise ShapeError("motion side and main sections travel as a pair")
        if self.kind == "I" and self.motion_side is not None:
            raise DomainError("I frames carry no motion sections")

    @property
    def has_motion(self):
        return self.motion_side is not None

    def __eq__(self, other):
        if not isinstance(other, LatentFrame):
            return NotImplemented
        return (
            self.kind == other.kind
            and self.residual_side == other.residual_side
            and self.residual_main == other.residual_main
            and self.motion_side == other.motion_side
            and self.motion_main == other.motion_main
        )


def _check_stream_sections(side, main, model, what):
    if side.channel_count != model.channel_count:
        raise ShapeError(
            f"{what} side tensor has {side.channel_count} channels, "
            f"model has {model.channel_count}"
        )
    if (side.alphabet_lo, side.alphabet_hi) != (model.side_alphabet_lo, model.side_alphabet_hi):
        raise AlphabetError(f"{what} side alphabet does not match the model")
    if (main.alphabet_lo, main.alphabet_hi) != (model.main_alphabet_lo, model.main_alphabet_hi):
        raise AlphabetError(f"{what} main alphabet does not match the model")
    if main.size and int(main.scale_index.max()) >= model.main_scales.size:
        raise DomainError(f"{what} scale_index exceeds the scale set")


@dataclass(frozen=True, eq=False)
class LatentContainer:
    """A full latent interchange file: shared model tables plus frames."""

    residual_model: StreamModel
    frames: tuple
    motion_model: StreamModel = None

    def __post_init__(self):
        frames = tuple(self.frames)
        object.__setattr__(self, "frames", frames)
        if not frames:
            raise ShapeError("container needs at least one frame")
        for frame in frames:
            if frame.has_motion:
                if self.motion_model is None:
                    raise DomainError("frame has motion sections but no motion model tables")
                _check_stream_sections(
                    frame.motion_side, frame.motion_main, self.motion_model, "motion"
                )
            _check_stream_sections(
                frame.residual_side, frame.residual_main, self.residual_model, "residual"
            )

    @property
    def frame_count(self):
        return len(self.frames)

    def __eq__(self, other):
        if not isinstance(other, LatentContainer):
            return NotImplemented
        return (
            self.residual_model == other.residual_model
            and self.motion_model == other.motion_model
            and self.frames == other.frames
        )


@dataclass(frozen=True)
class StreamPayload:
    """Coded output for one stream of one frame: the parameter bit sequence
    pb (pb_bits long, zero-padded to bytes) and the latent byte stream lb."""

    pb_bits: int
    pb: bytes
    lb: bytes

    def __post_init__(self):
        object.__setattr__(self, "pb", bytes(self.pb))
        object.__setattr__(self, "lb", bytes(self.lb))
        if self.pb_bits < 0:
            raise DomainError("pb_bits must be non-negative")
        if len(self.pb) != (self.pb_bits + 7) // 8:
            raise ShapeError(
                f"{len(self.pb)} pb bytes cannot hold exactly {self.pb_bits} bits"
            )

    @property
    def payload_bits(self):
        return self.pb_bits + 8 * len(self.lb)


@dataclass(frozen=True)
class BitstreamFrame:
    """One coded frame: a payload per present stream."""

    kind: str
    residual_side: StreamPayload
    residual_main: StreamPayload
    motion_side: StreamPayload = None
    motion_main: StreamPayload = None

    def __post_init__(self):
        if self.kind not in FRAME_KINDS:
            raise DomainError(f"frame kind must be one of {FRAME_KINDS}, got {self.kind!r}")
        if (self.motion_side is None) != (self.motion_main is None):
            raise ShapeError("motion side and main payloads travel as a pair")
        if self.kind == "I" and self.motion_side is not None:
            raise DomainError("I frames carry no motion sections")

    @property
    def has_motion(self):
        return self.motion_side is not None

    @property
    def payloads(self):
        """Present payloads in coding order, as (stream_name, payload) pairs."""
        named = []
        if self.has_motion:
            named.append(("motion_side", self.motion_side))
            named.append(("motion_main", self.motion_main))
        named.append(("residual_side", self.residual_side))
        named.append(("residual_main", self.residual_main))
        return named

    @property
    def payload_bits(self):
        return sum(payload.payload_bits for _, payload in self.payloads)


@dataclass(frozen=True)
class BitstreamContainer:
    """A full coded file: coding configuration plus one record per frame.

    Alphabet tuples are (side_lo, side_hi, main_lo, main_hi); motion_alphabets
    is None exactly when no frame carries motion streams.
    """

    k: int
    s_factorized: int
    s_hyper: int
    residual_alphabets: tuple
    frames: tuple
    motion_alphabets: tuple = None
    ranges_tag: int = RANGES_VERSION

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))
        object.__setattr__(self, "residual_alphabets", tuple(self.residual_alphabets))
        if self.motion_alphabets is not None:
            object.__setattr__(self, "motion_alphabets", tuple(self.motion_alphabets))
        if not 1 <= self.k <= 255:
            raise DomainError(f"mixture size must be in [1, 255], got {self.k}")
        for name, s in (("s_factorized", self.s_factorized), ("s_hyper", self.s_hyper)):
            if not 0 <= s <= _U16_MAX:
                raise DomainError(f"{name} must be in [0, {_U16_MAX}], got {s}")
        if not self.frames:
            raise ShapeError("container needs at least one frame")
        for pair in (self.residual_alphabets, self.motion_alphabets):
            if pair is None:
                continue
            if len(pair) != 4:
                raise ShapeError("alphabet tuple must be (side_lo, side_hi, main_lo, main_hi)")
            _check_i16_alphabet(pair[0], pair[1], "side")
            _check_i16_alphabet(pair[2], pair[3], "main")
        for frame in self.frames:
            if frame.has_motion and self.motion_alphabets is None:
                raise DomainError("frame has motion payloads but no motion alphabets")

    @property
    def has_motion(self):
        return self.motion_alphabets is not None

    @property
    def frame_count(self):
        return len(self.frames)

    @property
    def payload_bits(self):
        return sum(frame.payload_bits for frame in self.frames)


class _Cursor:
    """Sequential reader over immutable bytes; every primitive names the
    field it is reading so truncation errors point at the right place."""

    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, count, field):
        end = self.pos + count
        if end > len(self.data):
            raise FormatError("unexpected end of data", field=field, offset=self.pos)
        chunk = self.data[self.pos:end]
        self.pos = end
        return chunk

    def u8(self, field):
        return self.take(1, field)[0]

    def u16(self, field):
        return struct.unpack("<H", self.take(2, field))[0]

    def i16(self, field):
        return struct.unpack("<h", self.take(2, field))[0]

    def u32(self, field):
        return struct.unpack("<I", self.take(4, field))[0]

    def array(self, dtype, count, field):
        dtype = np.dtype(dtype)
        return np.frombuffer(self.take(dtype.itemsize * count, field), dtype=dtype)


def _patch_crc(body):
    struct.pack_into("<I", body, 8, zlib.crc32(bytes(body[12:])))


def _check_prologue(cursor, magic, what):
    found = bytes(cursor.take(4, "magic"))
    if found != magic:
        raise FormatError(f"bad magic {found!r}, want {magic!r}", field="magic", offset=0)
    version = cursor.u16("version")
    if version != FORMAT_VERSION:
        raise VersionError(
            f"unsupported {what} version {version}, this build reads {FORMAT_VERSION}",
            field="version",
            offset=4,
        )
    tag = cursor.u16("reserved")
    stored = cursor.u32("crc32")
    computed = zlib.crc32(cursor.data[12:])
    if stored != computed:
        raise FormatError(
            f"checksum mismatch: stored {stored:#010x}, computed {computed:#010x}",
            field="crc32",
            offset=8,
        )
    return tag


def _check_trailing(cursor):
    if cursor.pos != len(cursor.data):
        raise FormatError(
            f"{len(cursor.data) - cursor.pos} trailing bytes after the last frame",
            field="frames",
            offset=cursor.pos,
        )


def _read_flag(cursor, field):
    offset = cursor.pos
    value = cursor.u8(field)
    if value > 1:
        raise FormatError(f"{field} must be 0 or 1, got {value}", field=field, offset=offset)
    return bool(value)


def _write_model(out, model):
    out += struct.pack(
        "<hhH", model.side_alphabet_lo, model.side_alphabet_hi, model.channel_count
    )
    for pmf in model.side_pmfs:
        out += pmf.probs.astype("<f8").tobytes()
    out += struct.pack(
        "<hhH", model.main_alphabet_lo, model.main_alphabet_hi, model.main_scales.size
    )
    out += model.main_scales.scales.astype("<f8").tobytes()


def _read_model(cursor):
    offset = cursor.pos
    side_lo = cursor.i16("side_alphabet_lo")
    side_hi = cursor.i16("side_alphabet_hi")
    channels = cursor.u16("channel_count")
    if side_lo > side_hi:
        raise FormatError(
            f"side alphabet [{side_lo}, {side_hi}] is inverted",
            field="side_alphabet",
            offset=offset,
        )
    if channels == 0:
        raise FormatError("channel count must be positive", field="channel_count", offset=offset)
    size = side_hi - side_lo + 1
    pmfs = []
    for channel in range(channels):
        field = f"side_pmf[{channel}]"
        start = cursor.pos
        probs = cursor.array("<f8", size, field)
        try:
            pmfs.append(PmfTable(side_lo, side_hi, probs))
        except CodecError as err:
            raise FormatError(f"invalid side pmf: {err}", field=field, offset=start) from err
    main_lo = cursor.i16("main_alphabet_lo")
    main_hi = cursor.i16("main_alphabet_hi")
    scale_count = cursor.u16("scale_count")
    start = cursor.pos
    scales = cursor.array("<f8", scale_count, "scales")
    try:
        return StreamModel(tuple(pmfs), main_lo, main_hi, ScaleSet(scales))
    except CodecError as err:
        raise FormatError(f"invalid stream model: {err}", field="model", offset=start) from err


def _write_side(out, tensor):
    h, w, _ = tensor.symbols.shape
    out += struct.pack("<II", h, w)
    out += tensor.symbols.astype("<i2").tobytes()


def _read_side(cursor, model):
    offset = cursor.pos
    h = cursor.u32("height")
    w = cursor.u32("width")
    if h == 0 or w == 0:
        raise FormatError("side dimensions must be positive", field="side_shape", offset=offset)
    symbols = cursor.array("<i2", h * w * model.channel_count, "side_symbols")
    try:
        return SymbolTensor(
            symbols.astype(np.int64).reshape(h, w, model.channel_count),
            model.side_alphabet_lo,
            model.side_alphabet_hi,
        )
    except CodecError as err:
        raise FormatError(
            f"invalid side section: {err}", field="side_symbols", offset=offset
        ) from err


def _write_main(out, latents):
    out += struct.pack("<I", latents.size)
    out += latents.symbols.astype("<i2").tobytes()
    out += latents.scale_index.astype("<u2").tobytes()


def _read_main(cursor, model):
    offset = cursor.pos
    count = cursor.u32("element_count")
    symbols = cursor.array("<i2", count, "main_symbols").astype(np.int64)
    scale_index = cursor.array("<u2", count, "scale_index").astype(np.int64)
    if count and int(scale_index.max()) >= model.main_scales.size:
        raise FormatError(
            "scale_index exceeds the scale set", field="scale_index", offset=offset
        )
    try:
        return GaussianLatentSet(
            symbols, scale_index, model.main_alphabet_lo, model.main_alphabet_hi
        )
    except CodecError as err:
        raise FormatError(
            f"invalid main section: {err}", field="main_section", offset=offset
        ) from err


def _write_latent_frame(out, frame):
    out += struct.pack("<BB", _KIND_CODES[frame.kind], int(frame.has_motion))
    if frame.has_motion:
        _write_side(out, frame.motion_side)
        _write_main(out, frame.motion_main)
    _write_side(out, frame.residual_side)
    _write_main(out, frame.residual_main)


def _read_frame_prefix(cursor, has_motion_models):
    offset = cursor.pos
    code = cursor.u8("frame_kind")
    if code not in _KIND_NAMES:
        raise FormatError(f"unknown frame kind {code}", field="frame_kind", offset=offset)
    motion_present = _read_flag(cursor, "motion_present")
    if motion_present and not has_motion_models:
        raise FormatError(
            "frame carries motion streams but the header declares none",
            field="motion_present",
            offset=offset + 1,
        )
    return offset, _KIND_NAMES[code], motion_present


def _read_latent_frame(cursor, motion_model, residual_model):
    offset, kind, motion_present = _read_frame_prefix(cursor, motion_model is not None)
    motion_side = motion_main = None
    if motion_present:
        motion_side = _read_side(cursor, motion_model)
        motion_main = _read_main(cursor, motion_model)
    residual_side = _read_side(cursor, residual_model)
    residual_main = _read_main(cursor, residual_model)
    try:
        return LatentFrame(kind, residual_side, residual_main, motion_side, motion_main)
    except CodecError as err:
        raise FormatError(f"invalid frame: {err}", field="frame", offset=offset) from err


def write_latent_container(container):
    """Serializes a LatentContainer to .nvl bytes."""
    body = bytearray()
    body += _MAGIC_LATENT
    body += struct.pack("<HHI", FORMAT_VERSION, 0, 0)
    body += struct.pack("<IB", container.frame_count, int(container.motion_model is not None))
    if container.motion_model is not None:
        _write_model(body, container.motion_model)
    _write_model(body, container.residual_model)
    for frame in container.frames:
        _write_latent_frame(body, frame)
    _patch_crc(body)
    return bytes(body)


def read_latent_container(data):
    """Parses .nvl bytes, validating structure and every model invariant."""
    cursor = _Cursor(data)
    _check_prologue(cursor, _MAGIC_LATENT, "latent container")
    frame_count = cursor.u32("frame_count")
    has_motion = _read_flag(cursor, "has_motion")
    motion_model = _read_model(cursor) if has_motion else None
    residual_model = _read_model(cursor)
    frames = tuple(
        _read_latent_frame(cursor, motion_model, residual_model) for _ in range(frame_count)
    )
    _check_trailing(cursor)
    try:
        return LatentContainer(residual_model, frames, motion_model)
    except CodecError as err:
        raise FormatError(f"invalid container: {err}", field="container", offset=0) from err


def _write_payload(out, payload):
    out += struct.pack("<I", payload.pb_bits)
    out += payload.pb
    out += struct.pack("<I", len(payload.lb))
    out += payload.lb


def _read_payload(cursor, field):
    offset = cursor.pos
    pb_bits = cursor.u32(f"{field}.pb_bits")
    pb = bytes(cursor.take((pb_bits + 7) // 8, f"{field}.pb"))
    lb_length = cursor.u32(f"{field}.lb_length")
    lb = bytes(cursor.take(lb_length, f"{field}.lb"))
    try:
        return StreamPayload(pb_bits, pb, lb)
    except CodecError as err:
        raise FormatError(f"invalid payload: {err}", field=field, offset=offset) from err


def write_bitstream(container):
    """Serializes a BitstreamContainer to .nvb bytes."""
    body = bytearray()
    body += _MAGIC_BITSTREAM
    body += struct.pack("<HHI", FORMAT_VERSION, container.ranges_tag, 0)
    body += struct.pack(
        "<BHHIB",
        container.k,
        container.s_factorized,
        container.s_hyper,
        container.frame_count,
        int(container.has_motion),
    )
    if container.has_motion:
        body += struct.pack("<hhhh", *container.motion_alphabets)
    body += struct.pack("<hhhh", *container.residual_alphabets)
    for frame in container.frames:
        body += struct.pack("<BB", _KIND_CODES[frame.kind], int(frame.has_motion))
        for _, payload in frame.payloads:
            _write_payload(body, payload)
    _patch_crc(body)
    return bytes(body)


def _read_alphabet_pair(cursor, field):
    offset = cursor.pos
    pair = (
        cursor.i16(f"{field}.side_lo"),
        cursor.i16(f"{field}.side_hi"),
        cursor.i16(f"{field}.main_lo"),
        cursor.i16(f"{field}.main_hi"),
    )
    try:
        _check_i16_alphabet(pair[0], pair[1], "side")
        _check_i16_alphabet(pair[2], pair[3], "main")
    except CodecError as err:
        raise FormatError(f"invalid alphabets: {err}", field=field, offset=offset) from err
    return pair


def read_bitstream(data):
    """Parses .nvb bytes. Rejects parameter grid tags this build cannot
    decode, so a successfully read container is always decodable."""
    cursor = _Cursor(data)
    ranges_tag = _check_prologue(cursor, _MAGIC_BITSTREAM, "bitstream")
    if ranges_tag != RANGES_VERSION:
        raise VersionError(
            f"unsupported parameter grid tag {ranges_tag}, this build uses {RANGES_VERSION}",
            field="ranges_tag",
            offset=6,
        )
    k = cursor.u8("k")
    s_factorized = cursor.u16("s_factorized")
    s_hyper = cursor.u16("s_hyper")
    frame_count = cursor.u32("frame_count")
    has_motion = _read_flag(cursor, "has_motion")
    motion_alphabets = _read_alphabet_pair(cursor, "motion_alphabets") if has_motion else None
    residual_alphabets = _read_alphabet_pair(cursor, "residual_alphabets")
    frames = []
    for _ in range(frame_count):
        offset, kind, motion_present = _read_frame_prefix(cursor, has_motion)
        motion_side = motion_main = None
        if motion_present:
            motion_side = _read_payload(cursor, "motion_side")
            motion_main = _read_payload(cursor, "motion_main")
        residual_side = _read_payload(cursor, "residual_side")
        residual_main = _read_payload(cursor, "residual_main")
        try:
            frames.append(
                BitstreamFrame(kind, residual_side, residual_main, motion_side, motion_main)
            )
        except CodecError as err:
            raise FormatError(f"invalid frame: {err}", field="frame", offset=offset) from err
    _check_trailing(cursor)
    try:
        return BitstreamContainer(
            k,
            s_factorized,
            s_hyper,
            residual_alphabets,
            tuple(frames),
            motion_alphabets,
            ranges_tag,
        )
    except CodecError as err:
        raise FormatError(f"invalid container: {err}", field="container", offset=0) from err
