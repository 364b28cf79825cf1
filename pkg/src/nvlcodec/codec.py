"""Sequence-level encoding and decoding over latent containers.

Encoding walks frames in container order and, per present stream, selects
coding tables (selector), writes the parameter bit sequence pb, and range
codes the latents into lb. Side channels are coded in descending learned
entropy order; main elements are coded group by group in ascending scale
order, elements in original order within a group. Both orders derive from
shared model state, so the decoder rebuilds them independently.

Temporal chains: one state per (motion/residual, side/main) stream,
advanced only by the inter frames that carry the stream. I frames run the
same selection against a fresh empty state, so a high-gain replacement
still pays off within the frame, but they never touch the inter chain.

The baseline (every table learned, no parameter bits) is range coded for
real alongside the achieved stream, so reported savings come from actual
byte counts rather than entropy estimates.
"""

from dataclasses import dataclass

import numpy as np

from . import accounting
from .bitio import BitReader
from .container import (
    BitstreamContainer,
    BitstreamFrame,
    LatentContainer,
    LatentFrame,
    StreamPayload,
)
from .errors import DecodeError, DomainError, VersionError
from .latents import GaussianLatentSet, SymbolTensor
from .rangecoder import EncodedStream, pmf_to_freq, range_decode, range_encode
from .reparam import RANGES_VERSION, ZERO_MEAN_CODE_WIDTH, mixture_code_width
from .selector import (
    REPLACE_NEW,
    REUSE_TEMPORAL,
    TemporalState,
    decode_decisions,
    decode_hyper_decisions,
    encode_factorized_frame,
    encode_hyper_frame,
    order_channels_by_entropy,
)

DEFAULT_K = 3
DEFAULT_S = 8


@dataclass(frozen=True)
class StreamStats:
    """Bit accounting for one stream of one frame.

    baseline_bits and achieved_bits are real coded sizes; estimate_bits is
    the learned-table entropy estimate. pb_bits always equals mask_bits +
    param_bits. The decision tallies cover considered channels only.
    """

    baseline_bits: int
    achieved_bits: int
    pb_bits: int
    lb_bits: int
    estimate_bits: float
    mask_bits: int
    param_bits: int
    reused: int
    replaced: int
    kept: int


@dataclass(frozen=True)
class FrameStats:
    kind: str
    residual_side: StreamStats
    residual_main: StreamStats
    motion_side: StreamStats = None
    motion_main: StreamStats = None

    @property
    def streams(self):
        named = []
        if self.motion_side is not None:
            named.append(("motion_side", self.motion_side))
            named.append(("motion_main", self.motion_main))
        named.append(("residual_side", self.residual_side))
        named.append(("residual_main", self.residual_main))
        return named

    @property
    def baseline_bits(self):
        return sum(stats.baseline_bits for _, stats in self.streams)

    @property
    def achieved_bits(self):
        return sum(stats.achieved_bits for _, stats in self.streams)

    @property
    def estimate_bits(self):
        return sum(stats.estimate_bits for _, stats in self.streams)


@dataclass(frozen=True)
class SequenceStats:
    frames: tuple

    @property
    def baseline_bits(self):
        return sum(frame.baseline_bits for frame in self.frames)

    @property
    def achieved_bits(self):
        return sum(frame.achieved_bits for frame in self.frames)

    @property
    def saving(self):
        return accounting.saving(self.baseline_bits, self.achieved_bits)


class _ModelContext:
    """Per-model coding artifacts computed once per sequence: the channel
    visit order, the learned frequency tables, and the hyper pmf tables."""

    def __init__(self, model):
        self.model = model
        self.side_order = [int(c) for c in order_channels_by_entropy(model.side_pmfs)]
        self.side_freqs = [pmf_to_freq(pmf) for pmf in model.side_pmfs]
        self.hyper_pmfs = hyper = accounting.hyper_tables(
            model.main_scales, model.main_alphabet_lo, model.main_alphabet_hi
        )
        self.hyper_freqs = [pmf_to_freq(pmf) for pmf in hyper]

    def side_budget(self, s_factorized):
        return min(s_factorized, self.model.channel_count)

    def main_budget(self, s_hyper):
        return min(s_hyper, self.model.main_scales.size)

    def side_freq(self, channel, table):
        if table is self.model.side_pmfs[channel]:
            return self.side_freqs[channel]
        return pmf_to_freq(table)

    def main_freq(self, group, table):
        if table is self.hyper_pmfs[group]:
            return self.hyper_freqs[group]
        return pmf_to_freq(table)


def _tally(decisions, considered, payload_width):
    reused = replaced = kept = 0
    for index in considered:
        kind = decisions[index].kind
        if kind == REUSE_TEMPORAL:
            reused += 1
        elif kind == REPLACE_NEW:
            replaced += 1
        else:
            kept += 1
    mask_bits = reused + 2 * (replaced + kept)
    return mask_bits, replaced * payload_width, reused, replaced, kept


def _side_symbols(ctx, tensor):
    return np.concatenate([tensor.channel(c).ravel() for c in ctx.side_order])


def _side_schedule(ctx, chosen, per_channel):
    schedule = []
    for channel in ctx.side_order:
        freq = ctx.side_freqs[channel] if chosen is None else ctx.side_freq(channel, chosen[channel])
        schedule.extend([freq] * per_channel)
    return schedule


def _encode_side_stream(ctx, tensor, s_eff, k, state):
    decisions, writer, new_state = encode_factorized_frame(
        tensor, ctx.model.side_pmfs, s_eff, k, state
    )
    chosen = [decision.pmf for decision in decisions]
    per_channel = tensor.symbols.shape[0] * tensor.symbols.shape[1]
    symbols = _side_symbols(ctx, tensor)
    lb = range_encode(symbols, _side_schedule(ctx, chosen, per_channel)).data
    baseline = range_encode(symbols, _side_schedule(ctx, None, per_channel)).data
    considered = ctx.side_order[:s_eff]
    mask_bits, param_bits, reused, replaced, kept = _tally(
        decisions, considered, mixture_code_width(k)
    )
    stats = StreamStats(
        baseline_bits=8 * len(baseline),
        achieved_bits=writer.bit_length + 8 * len(lb),
        pb_bits=writer.bit_length,
        lb_bits=8 * len(lb),
        estimate_bits=accounting.expected_bits_factorized(tensor, ctx.model.side_pmfs).total_bits,
        mask_bits=mask_bits,
        param_bits=param_bits,
        reused=reused,
        replaced=replaced,
        kept=kept,
    )
    return StreamPayload(writer.bit_length, writer.getvalue(), lb), new_state, stats


def _group_order(scale_index):
    # Stable sort yields groups in ascending scale order with original
    # element order preserved inside each group.
    return np.argsort(scale_index, kind="stable")


def _group_sizes(latents, group_count):
    if latents.size == 0:
        return np.zeros(group_count, dtype=np.int64)
    return np.bincount(latents.scale_index, minlength=group_count)


def _main_schedule(ctx, chosen, sizes):
    schedule = []
    for group, size in enumerate(sizes):
        if size == 0:
            continue
        freq = ctx.hyper_freqs[group] if chosen is None else ctx.main_freq(group, chosen[group])
        schedule.extend([freq] * int(size))
    return schedule


def _encode_main_stream(ctx, latents, s_eff, state):
    decisions, writer, new_state = encode_hyper_frame(
        latents, ctx.model.main_scales, s_eff, state, tables=ctx.hyper_pmfs
    )
    chosen = [decision.pmf for decision in decisions]
    sizes = _group_sizes(latents, ctx.model.main_scales.size)
    if latents.size:
        symbols = latents.symbols[_group_order(latents.scale_index)]
        lb = range_encode(symbols, _main_schedule(ctx, chosen, sizes)).data
        baseline = range_encode(symbols, _main_schedule(ctx, None, sizes)).data
    else:
        lb = baseline = b""
    considered = [g for g in range(s_eff) if sizes[g] > 0]
    mask_bits, param_bits, reused, replaced, kept = _tally(
        decisions, considered, ZERO_MEAN_CODE_WIDTH
    )
    stats = StreamStats(
        baseline_bits=8 * len(baseline),
        achieved_bits=writer.bit_length + 8 * len(lb),
        pb_bits=writer.bit_length,
        lb_bits=8 * len(lb),
        estimate_bits=accounting.expected_bits_hyper(
            latents, ctx.model.main_scales, tables=ctx.hyper_pmfs
        ).total_bits,
        mask_bits=mask_bits,
        param_bits=param_bits,
        reused=reused,
        replaced=replaced,
        kept=kept,
    )
    return StreamPayload(writer.bit_length, writer.getvalue(), lb), new_state, stats


def _alphabets(model):
    return (
        model.side_alphabet_lo,
        model.side_alphabet_hi,
        model.main_alphabet_lo,
        model.main_alphabet_hi,
    )


def encode_sequence(container, k=DEFAULT_K, s_factorized=DEFAULT_S, s_hyper=DEFAULT_S):
    """Encodes a LatentContainer into a BitstreamContainer plus statistics.

    k is the mixture size for side-channel refits; s_factorized and s_hyper
    cap how many side channels / scale groups per stream may be replaced,
    each clamped to what the model actually has. Deterministic: identical
    inputs yield identical bytes.
    """
    if k < 1:
        raise DomainError(f"mixture size must be at least 1, got {k}")
    if s_factorized < 0 or s_hyper < 0:
        raise DomainError("replacement budgets must be non-negative")
    contexts = {"residual": _ModelContext(container.residual_model)}
    if container.motion_model is not None:
        contexts["motion"] = _ModelContext(container.motion_model)
    states = {}
    for name, ctx in contexts.items():
        states[name, "side"] = TemporalState.fresh(ctx.side_budget(s_factorized))
        states[name, "main"] = TemporalState.fresh(ctx.main_budget(s_hyper))

    coded_frames = []
    frame_stats = []
    for frame in container.frames:
        inter = frame.kind != "I"
        payloads = {}
        stats = {}
        streams = [("residual", frame.residual_side, frame.residual_main)]
        if frame.has_motion:
            streams.insert(0, ("motion", frame.motion_side, frame.motion_main))
        for name, side, main in streams:
            ctx = contexts[name]
            side_state = states[name, "side"] if inter else TemporalState.fresh(
                ctx.side_budget(s_factorized)
            )
            main_state = states[name, "main"] if inter else TemporalState.fresh(
                ctx.main_budget(s_hyper)
            )
            payloads[name, "side"], new_side, stats[name, "side"] = _encode_side_stream(
                ctx, side, ctx.side_budget(s_factorized), k, side_state
            )
            payloads[name, "main"], new_main, stats[name, "main"] = _encode_main_stream(
                ctx, main, ctx.main_budget(s_hyper), main_state
            )
            if inter:
                states[name, "side"] = new_side
                states[name, "main"] = new_main
        coded_frames.append(
            BitstreamFrame(
                frame.kind,
                payloads["residual", "side"],
                payloads["residual", "main"],
                payloads.get(("motion", "side")),
                payloads.get(("motion", "main")),
            )
        )
        frame_stats.append(
            FrameStats(
                frame.kind,
                stats["residual", "side"],
                stats["residual", "main"],
                stats.get(("motion", "side")),
                stats.get(("motion", "main")),
            )
        )
    bitstream = BitstreamContainer(
        k,
        s_factorized,
        s_hyper,
        _alphabets(container.residual_model),
        tuple(coded_frames),
        _alphabets(container.motion_model) if container.motion_model is not None else None,
    )
    return bitstream, SequenceStats(tuple(frame_stats))


def _drain_check(reader, what):
    if reader.remaining():
        raise DecodeError(f"{reader.remaining()} unconsumed parameter bits in {what}")


def _decode_side_stream(ctx, payload, reference, s_eff, k, state):
    reader = BitReader(payload.pb, payload.pb_bits)
    tables, new_state = decode_decisions(reader, ctx.model.side_pmfs, s_eff, k, state)
    _drain_check(reader, "side stream")
    h, w, channels = reference.symbols.shape
    per_channel = h * w
    flat = range_decode(
        EncodedStream(payload.lb, per_channel * channels),
        _side_schedule(ctx, tables, per_channel),
    )
    symbols = np.empty((h, w, channels), dtype=np.int64)
    offset = 0
    for channel in ctx.side_order:
        symbols[:, :, channel] = flat[offset:offset + per_channel].reshape(h, w)
        offset += per_channel
    tensor = SymbolTensor(symbols, ctx.model.side_alphabet_lo, ctx.model.side_alphabet_hi)
    return tensor, new_state


def _decode_main_stream(ctx, payload, reference, s_eff, state):
    sizes = _group_sizes(reference, ctx.model.main_scales.size)
    reader = BitReader(payload.pb, payload.pb_bits)
    tables, new_state = decode_hyper_decisions(
        reader,
        ctx.model.main_scales,
        s_eff,
        state,
        sizes,
        ctx.model.main_alphabet_lo,
        ctx.model.main_alphabet_hi,
        tables=ctx.hyper_pmfs,
    )
    _drain_check(reader, "main stream")
    if reference.size:
        flat = range_decode(
            EncodedStream(payload.lb, reference.size), _main_schedule(ctx, tables, sizes)
        )
        symbols = np.empty(reference.size, dtype=np.int64)
        symbols[_group_order(reference.scale_index)] = flat
    else:
        if payload.lb:
            raise DecodeError("latent bytes present for an empty stream")
        symbols = np.zeros(0, dtype=np.int64)
    latents = GaussianLatentSet(
        symbols,
        reference.scale_index,
        ctx.model.main_alphabet_lo,
        ctx.model.main_alphabet_hi,
    )
    return latents, new_state


def _check_decode_match(bitstream, reference, k):
    if k is not None and k != bitstream.k:
        raise VersionError(
            f"bitstream was coded with k={bitstream.k}, decoder configured for k={k}"
        )
    if bitstream.ranges_tag != RANGES_VERSION:
        raise VersionError(
            f"unsupported parameter grid tag {bitstream.ranges_tag}, "
            f"this build uses {RANGES_VERSION}"
        )
    if bitstream.frame_count != reference.frame_count:
        raise DecodeError(
            f"bitstream has {bitstream.frame_count} frames, "
            f"reference has {reference.frame_count}"
        )
    if bitstream.has_motion != (reference.motion_model is not None):
        raise DecodeError("bitstream and reference disagree on motion model presence")
    if bitstream.residual_alphabets != _alphabets(reference.residual_model):
        raise DecodeError("residual alphabets do not match the reference model")
    if bitstream.has_motion and bitstream.motion_alphabets != _alphabets(reference.motion_model):
        raise DecodeError("motion alphabets do not match the reference model")
    for coded, frame in zip(bitstream.frames, reference.frames):
        if coded.kind != frame.kind:
            raise DecodeError(f"frame kind mismatch: coded {coded.kind}, reference {frame.kind}")
        if coded.has_motion != frame.has_motion:
            raise DecodeError("frame motion presence does not match the reference")


def decode_sequence(bitstream, reference, k=None):
    """Decodes a BitstreamContainer back into latents.

    The reference container supplies what a deployed receiver would already
    have or derive elsewhere: the shared model tables, frame kinds, tensor
    shapes, and scale assignments. All symbol values come from the coded
    bytes. Pass k to assert the decoder's configured mixture size against
    the header. Raises DecodeError when the bitstream and reference do not
    belong together; never returns silently corrupt output.
    """
    _check_decode_match(bitstream, reference, k)
    contexts = {"residual": _ModelContext(reference.residual_model)}
    if reference.motion_model is not None:
        contexts["motion"] = _ModelContext(reference.motion_model)
    states = {}
    for name, ctx in contexts.items():
        states[name, "side"] = TemporalState.fresh(ctx.side_budget(bitstream.s_factorized))
        states[name, "main"] = TemporalState.fresh(ctx.main_budget(bitstream.s_hyper))

    decoded_frames = []
    for coded, frame in zip(bitstream.frames, reference.frames):
        inter = frame.kind != "I"
        sections = {}
        streams = [("residual", frame.residual_side, frame.residual_main,
                    coded.residual_side, coded.residual_main)]
        if frame.has_motion:
            streams.insert(0, ("motion", frame.motion_side, frame.motion_main,
                               coded.motion_side, coded.motion_main))
        for name, ref_side, ref_main, pay_side, pay_main in streams:
            ctx = contexts[name]
            s_side = ctx.side_budget(bitstream.s_factorized)
            s_main = ctx.main_budget(bitstream.s_hyper)
            side_state = states[name, "side"] if inter else TemporalState.fresh(s_side)
            main_state = states[name, "main"] if inter else TemporalState.fresh(s_main)
            sections[name, "side"], new_side = _decode_side_stream(
                ctx, pay_side, ref_side, s_side, bitstream.k, side_state
            )
            sections[name, "main"], new_main = _decode_main_stream(
                ctx, pay_main, ref_main, s_main, main_state
            )
            if inter:
                states[name, "side"] = new_side
                states[name, "main"] = new_main
        decoded_frames.append(
            LatentFrame(
                frame.kind,
                sections["residual", "side"],
                sections["residual", "main"],
                sections.get(("motion", "side")),
                sections.get(("motion", "main")),
            )
        )
    return LatentContainer(
        reference.residual_model, tuple(decoded_frames), reference.motion_model
    )
