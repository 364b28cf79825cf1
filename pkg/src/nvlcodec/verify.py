"""Invariant checks over one latent container, reported as verdicts.

Three checks run against the file: the pricing inequality (no channel or
scale group may have an empirical entropy floor above its learned-table
cross entropy, beyond float roundoff), the selection overhead bound (a
coded frame may exceed its coded baseline only by the mask budget plus
coder flush slack), and the lossless round trip. A failing pricing check
can only mean an implementation bug, never bad data.
"""

from dataclasses import dataclass

import numpy as np

from . import accounting
from .codec import DEFAULT_K, DEFAULT_S, decode_sequence, encode_sequence

# Range coder flush slack per coded section, in bits.
FLUSH_SLACK = 32


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def containers_match(a, b):
    """True when both containers carry identical frame payloads."""
    if a.frame_count != b.frame_count:
        return False
    for fa, fb in zip(a.frames, b.frames):
        if fa.kind != fb.kind or fa.has_motion != fb.has_motion:
            return False
        pairs = [
            (fa.residual_side.symbols, fb.residual_side.symbols),
            (fa.residual_main.symbols, fb.residual_main.symbols),
            (fa.residual_main.scale_index, fb.residual_main.scale_index),
        ]
        if fa.has_motion:
            pairs.extend([
                (fa.motion_side.symbols, fb.motion_side.symbols),
                (fa.motion_main.symbols, fb.motion_main.symbols),
                (fa.motion_main.scale_index, fb.motion_main.scale_index),
            ])
        if any(not np.array_equal(x, y) for x, y in pairs):
            return False
    return True


def _check_pricing(container):
    checked = 0
    violations = 0
    worst = 0.0

    def scan(expected, limit):
        nonlocal checked, violations, worst
        for e, l in zip(expected.per_channel_bits, limit.per_channel_bits):
            checked += 1
            if l > e * (1.0 + accounting.GIBBS_RTOL):
                violations += 1
                worst = max(worst, l - e)

    for frame in container.frames:
        streams = [(frame.residual_side, frame.residual_main, container.residual_model)]
        if frame.has_motion:
            streams.append((frame.motion_side, frame.motion_main, container.motion_model))
        for side, main, model in streams:
            scan(
                accounting.expected_bits_factorized(side, model.side_pmfs),
                accounting.limit_bits_factorized(side),
            )
            scan(
                accounting.expected_bits_hyper(main, model.main_scales),
                accounting.limit_bits_hyper(main, model.main_scales),
            )
    detail = f"{checked} channels and groups, {violations} violations"
    if violations:
        detail += f", worst excess {worst:.6f} bits"
    return CheckResult("pricing-inequality", violations == 0, detail)


def _check_overhead(stats, s_factorized, s_hyper):
    allowance = 2 * s_factorized + 2 * s_hyper
    violations = 0
    worst = None
    for index, frame in enumerate(stats.frames):
        sections = len(frame.streams)
        bound = frame.baseline_bits + allowance + FLUSH_SLACK * sections
        margin = bound - frame.achieved_bits
        if worst is None or margin < worst:
            worst = margin
        if frame.achieved_bits > bound:
            violations += 1
    detail = (
        f"{len(stats.frames)} frames, {violations} violations, "
        f"tightest margin {worst} bits"
    )
    return CheckResult("overhead-bound", violations == 0, detail)


def _check_round_trip(container, bitstream, k):
    decoded = decode_sequence(bitstream, container, k=k)
    ok = containers_match(container, decoded)
    return CheckResult(
        "round-trip", ok, "decoded latents match exactly" if ok else "decoded latents differ"
    )


def verify_container(container, k=DEFAULT_K, s_factorized=DEFAULT_S, s_hyper=DEFAULT_S):
    """Runs all checks; returns a CheckResult per check, order fixed."""
    bitstream, stats = encode_sequence(container, k, s_factorized, s_hyper)
    return (
        _check_pricing(container),
        _check_overhead(stats, s_factorized, s_hyper),
        _check_round_trip(container, bitstream, k),
    )


def render_verdicts(results):
    lines = [
        f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.detail}" for r in results
    ]
    lines.append("VERDICT " + ("pass" if all(r.passed for r in results) else "fail"))
    return "\n".join(lines)
