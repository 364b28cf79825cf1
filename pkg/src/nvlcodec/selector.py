"""Per-channel replace/reuse/keep table selection with temporal masks.

Each coded channel (or scale group, on the main-latent side) can keep its
learned pmf, reuse the parameter set signalled on a previous inter frame,
or pay for a freshly fitted parameter set. Decisions are driven by the
measured bit gain of the fitted candidate and are written into a parameter
bit sequence that the decoder replays to rebuild the exact table choices.

Only the S highest-entropy channels participate; the rest keep their
learned tables for free. Replacement is taken only when the gain exceeds
the payload cost, and reuse only when the gain is positive, so the mask
bits are the only overhead that can ever hurt.
"""

from dataclasses import dataclass

import numpy as np

from .accounting import counts_bits, hyper_tables
from .bitio import BitWriter
from .errors import (
    AlphabetError,
    DecodeError,
    DomainError,
    EmptyGroupError,
    ShapeError,
    StateError,
)
from .latents import build_channel_histogram, build_group_histogram
from .reparam import (
    INDEX_BITS,
    ZERO_MEAN_CODE_WIDTH,
    ParamRanges,
    QuantizedParamCode,
    dequantize_params,
    fit_mixture,
    fit_zero_mean,
    mixture_code_width,
    quantize_params,
    reparam_pmf,
)

# Decision kinds, named for their wire encoding.
REUSE_TEMPORAL = "reuse_temporal"  # temporal bit 1
REPLACE_NEW = "replace_new"  # mask bits 0,1 + parameter payload
KEEP_LEARNED = "keep_learned"  # mask bits 0,0 (or no bits when not considered)


@dataclass(frozen=True, eq=False)
class TemporalState:
    """Parameter codes carried between inter frames, one slot per considered
    channel rank (factorized) or eligible scale group (hyper).

    A None slot means the channel last kept its learned pmf; a slot holds a
    QuantizedParamCode exactly while reuse of that code is on offer. States
    are immutable: encode/decode return the successor state and the caller
    commits it once the frame is actually written.
    """

    slots: tuple

    def __post_init__(self):
        object.__setattr__(self, "slots", tuple(self.slots))
        for slot in self.slots:
            if slot is not None and not isinstance(slot, QuantizedParamCode):
                raise StateError(f"slot must be a QuantizedParamCode or None, got {slot!r}")

    @classmethod
    def fresh(cls, slot_count):
        if slot_count < 0:
            raise DomainError(f"slot count must be non-negative, got {slot_count}")
        return cls((None,) * slot_count)

    @property
    def slot_count(self):
        return len(self.slots)

    def __eq__(self, other):
        if not isinstance(other, TemporalState):
            return NotImplemented
        return self.slots == other.slots


@dataclass(frozen=True, eq=False)
class ChannelDecision:
    """Outcome for one channel: the pmf that codes its symbols, how that
    choice is signalled, and the measured gain of the fitted candidate.

    code is present exactly when kind is REPLACE_NEW. gain is 0.0 for
    channels that were never considered (rank beyond S, or an empty group).
    """

    kind: str
    pmf: object  # PmfTable
    gain: float
    code: QuantizedParamCode = None

    def __post_init__(self):
        if self.kind not in (REUSE_TEMPORAL, REPLACE_NEW, KEEP_LEARNED):
            raise DomainError(f"unknown decision kind {self.kind!r}")
        if (self.code is not None) != (self.kind == REPLACE_NEW):
            raise DomainError("parameter codes travel with replacement decisions only")

    def __eq__(self, other):
        if not isinstance(other, ChannelDecision):
            return NotImplemented
        return (
            self.kind == other.kind
            and self.pmf == other.pmf
            and self.gain == other.gain
            and self.code == other.code
        )


def order_channels_by_entropy(pmfs):
    """Visit order for table selection: descending learned-table entropy.

    Ties break toward the lower channel index. The ordering depends only on
    the shared model tables, so both ends reproduce it independently.
    """
    if len(pmfs) == 0:
        raise DomainError("need at least one pmf to order")
    entropies = np.array([pmf.entropy_bits() for pmf in pmfs])
    return np.argsort(-entropies, kind="stable")


def compute_gain(slice_symbols, learned, candidate):
    """Bits saved by coding the slice with candidate instead of learned.

    Positive means the candidate is cheaper; negative means it is worse.
    Both tables must share an alphabet that covers every symbol.
    """
    if (learned.alphabet_lo, learned.alphabet_hi) != (
        candidate.alphabet_lo,
        candidate.alphabet_hi,
    ):
        raise AlphabetError("learned and candidate tables must share an alphabet")
    symbols = np.asarray(slice_symbols).reshape(-1)
    if symbols.size and (
        symbols.min() < learned.alphabet_lo or symbols.max() > learned.alphabet_hi
    ):
        raise AlphabetError("slice symbols fall outside the table alphabet")
    counts = np.bincount(symbols - learned.alphabet_lo, minlength=learned.size)
    return _gain_from_counts(counts, learned, candidate)


def _gain_from_counts(counts, learned, candidate):
    return counts_bits(counts, learned.probs) - counts_bits(counts, candidate.probs)


def _resolve_branch(writer, prev, code, gain, threshold, learned, candidate):
    # Branch order matters: an unchanged fit is reused for a single mask bit
    # before the gain is weighed against the full payload cost, and a stale
    # slot is dropped (not reused) when the new fit no longer matches it.
    if prev is None and gain <= threshold:
        writer.write_bit(1)
        return ChannelDecision(REUSE_TEMPORAL, learned, gain), None
    if prev is not None and code == prev and gain > 0.0:
        writer.write_bit(1)
        return ChannelDecision(REUSE_TEMPORAL, candidate, gain), prev
    if gain > threshold:
        writer.write_bit(0)
        writer.write_bit(1)
        for index in code.indices:
            writer.write_uint(index, INDEX_BITS)
        return ChannelDecision(REPLACE_NEW, candidate, gain, code), code
    writer.write_bit(0)
    writer.write_bit(0)
    return ChannelDecision(KEEP_LEARNED, learned, gain), None


def _check_slot_count(state, s):
    if state.slot_count != s:
        raise StateError(f"state has {state.slot_count} slots, frame needs {s}")


def encode_factorized_frame(tensor, learned_pmfs, s, k, state):
    """Selects a coding table per channel and writes the mask/parameter bits.

    The s highest-entropy channels are examined in order; each gets a k
    component mixture fitted to its histogram, and the branch conditions
    run against the measured gain with the replacement threshold at the
    payload width 10(3k - 1). Channels outside the top s keep their learned
    pmfs and contribute no bits.

    Returns (decisions in channel order, parameter BitWriter, successor
    state). The caller commits the state only when the frame is kept.
    """
    if len(learned_pmfs) != tensor.channel_count:
        raise ShapeError(
            f"{len(learned_pmfs)} pmfs for {tensor.channel_count} channels"
        )
    for pmf in learned_pmfs:
        if (pmf.alphabet_lo, pmf.alphabet_hi) != (tensor.alphabet_lo, tensor.alphabet_hi):
            raise AlphabetError("learned pmf alphabet must match the tensor alphabet")
    if k < 1:
        raise DomainError(f"mixture size must be at least 1, got {k}")
    if not 0 <= s <= tensor.channel_count:
        raise DomainError(f"s={s} outside [0, {tensor.channel_count}]")
    _check_slot_count(state, s)

    degenerate = tensor.alphabet_lo == tensor.alphabet_hi
    ranges = None if degenerate else ParamRanges.for_alphabet(
        tensor.alphabet_lo, tensor.alphabet_hi
    )
    threshold = float(mixture_code_width(k))
    order = order_channels_by_entropy(learned_pmfs)
    writer = BitWriter()
    decisions = [None] * tensor.channel_count
    slots = list(state.slots)
    for rank in range(s):
        channel = int(order[rank])
        if degenerate:
            # A one-symbol alphabet admits only the learned table, so the
            # gain is zero and no parameters can ever be worth sending.
            decisions[channel], slots[rank] = _resolve_branch(
                writer, slots[rank], None, 0.0, threshold,
                learned_pmfs[channel], learned_pmfs[channel],
            )
            continue
        hist = build_channel_histogram(tensor, channel)
        params = fit_mixture(hist, k, ranges)
        code = quantize_params(params, ranges)
        candidate = reparam_pmf(params, tensor.alphabet_lo, tensor.alphabet_hi)
        gain = _gain_from_counts(hist.counts, learned_pmfs[channel], candidate)
        decisions[channel], slots[rank] = _resolve_branch(
            writer, slots[rank], code, gain, threshold, learned_pmfs[channel], candidate
        )
    for channel in range(tensor.channel_count):
        if decisions[channel] is None:
            decisions[channel] = ChannelDecision(KEEP_LEARNED, learned_pmfs[channel], 0.0)
    return decisions, writer, TemporalState(tuple(slots))


def encode_hyper_frame(latents, scales, s, state, tables=None):
    """Table selection for the scale groups of a main latent set.

    Groups ascend by predefined scale; the first s are eligible. The
    candidate is a zero-mean fit, so the payload is a single 10 bit index
    and the replacement threshold is 10 bits. Groups with no elements this
    frame are passed over silently: no bits, slot untouched.
    """
    if not 0 <= s <= scales.size:
        raise DomainError(f"s={s} outside [0, {scales.size}]")
    _check_slot_count(state, s)
    if latents.size and int(latents.scale_index.max()) >= scales.size:
        raise DomainError("scale_index exceeds the scale set")
    if tables is None:
        tables = hyper_tables(scales, latents.alphabet_lo, latents.alphabet_hi)

    degenerate = latents.alphabet_lo == latents.alphabet_hi
    ranges = None if degenerate else ParamRanges.for_alphabet(
        latents.alphabet_lo, latents.alphabet_hi
    )
    threshold = float(ZERO_MEAN_CODE_WIDTH)
    writer = BitWriter()
    decisions = [None] * scales.size
    slots = list(state.slots)
    for group in range(scales.size):
        if group >= s:
            decisions[group] = ChannelDecision(KEEP_LEARNED, tables[group], 0.0)
            continue
        try:
            hist = build_group_histogram(latents, group)
        except EmptyGroupError:
            decisions[group] = ChannelDecision(KEEP_LEARNED, tables[group], 0.0)
            continue
        if degenerate:
            decisions[group], slots[group] = _resolve_branch(
                writer, slots[group], None, 0.0, threshold,
                tables[group], tables[group],
            )
            continue
        params = fit_zero_mean(hist, ranges)
        code = quantize_params(params, ranges)
        candidate = reparam_pmf(params, latents.alphabet_lo, latents.alphabet_hi)
        gain = _gain_from_counts(hist.counts, tables[group], candidate)
        decisions[group], slots[group] = _resolve_branch(
            writer, slots[group], code, gain, threshold, tables[group], candidate
        )
    return decisions, writer, TemporalState(tuple(slots))


def _replay_branch(reader, prev, ranges, k, learned, alphabet_lo, alphabet_hi):
    # Mirror of _resolve_branch driven purely by the wire bits. ranges is
    # None on a one-symbol alphabet, where the encoder never emits the
    # parameter-carrying branches; seeing one means the stream is corrupt.
    if reader.read_bit():
        if prev is None:
            return learned, None
        if ranges is None:
            raise DecodeError("parameter reuse on a one-symbol alphabet")
        params = dequantize_params(prev, ranges, k)
        return reparam_pmf(params, alphabet_lo, alphabet_hi), prev
    if reader.read_bit():
        if ranges is None:
            raise DecodeError("parameter payload on a one-symbol alphabet")
        width = mixture_code_width(k) if k is not None else ZERO_MEAN_CODE_WIDTH
        indices = tuple(reader.read_uint(INDEX_BITS) for _ in range(width // INDEX_BITS))
        code = QuantizedParamCode(indices)
        params = dequantize_params(code, ranges, k)
        return reparam_pmf(params, alphabet_lo, alphabet_hi), code
    return learned, None


def decode_decisions(param_bits, learned_pmfs, s, k, state):
    """Replays factorized mask bits into the encoder's exact table choices.

    param_bits is a BitReader over the parameter bit sequence. Returns the
    per-channel tables in channel order plus the successor state; both are
    bit-identical to the encoder's. A truncated bit source raises the
    reader's format error.
    """
    if len(learned_pmfs) == 0:
        raise DomainError("need at least one learned pmf")
    if k < 1:
        raise DomainError(f"mixture size must be at least 1, got {k}")
    if not 0 <= s <= len(learned_pmfs):
        raise DomainError(f"s={s} outside [0, {len(learned_pmfs)}]")
    _check_slot_count(state, s)

    alphabet_lo = learned_pmfs[0].alphabet_lo
    alphabet_hi = learned_pmfs[0].alphabet_hi
    ranges = None if alphabet_lo == alphabet_hi else ParamRanges.for_alphabet(
        alphabet_lo, alphabet_hi
    )
    order = order_channels_by_entropy(learned_pmfs)
    tables = list(learned_pmfs)
    slots = list(state.slots)
    for rank in range(s):
        channel = int(order[rank])
        tables[channel], slots[rank] = _replay_branch(
            param_bits, slots[rank], ranges, k, learned_pmfs[channel], alphabet_lo, alphabet_hi
        )
    return tables, TemporalState(tuple(slots))


def decode_hyper_decisions(
    param_bits, scales, s, state, group_sizes, alphabet_lo, alphabet_hi, tables=None
):
    """Hyper-side mirror of decode_decisions.

    group_sizes gives the element count per scale group this frame; it must
    be supplied because empty eligible groups were skipped without writing
    any bits. Returns per-group tables plus the successor state.
    """
    if len(group_sizes) != scales.size:
        raise ShapeError(f"{len(group_sizes)} group sizes for {scales.size} scales")
    if not 0 <= s <= scales.size:
        raise DomainError(f"s={s} outside [0, {scales.size}]")
    _check_slot_count(state, s)
    if tables is None:
        tables = hyper_tables(scales, alphabet_lo, alphabet_hi)

    ranges = None if alphabet_lo == alphabet_hi else ParamRanges.for_alphabet(
        alphabet_lo, alphabet_hi
    )
    chosen = list(tables)
    slots = list(state.slots)
    for group in range(s):
        if group_sizes[group] == 0:
            continue
        chosen[group], slots[group] = _replay_branch(
            param_bits, slots[group], ranges, None, tables[group], alphabet_lo, alphabet_hi
        )
    return chosen, TemporalState(tuple(slots))
