"""Bit accounting: model-expected bits, empirical limits, gap and saving.

Expected bits price symbols with the coding pmf (what the range coder will
approach); limit bits price them with the frame's own empirical histogram.
The difference is the part of the rate a per-frame refit could recover. Both
sides are computed through the same count-weighted log sum so the Gibbs
inequality holds down to float roundoff.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    AlphabetError,
    DomainError,
    EmptyGroupError,
    ShapeError,
    UndefinedMetricError,
)
from .latents import build_channel_histogram, build_group_histogram, gaussian_pmf

# Relative slack for float roundoff when comparing limit against baseline.
GIBBS_RTOL = 1e-9


@dataclass(frozen=True, eq=False)
class BitReport:
    """Per-channel (or per-group) bit totals for one stream of one frame."""

    per_channel_bits: np.ndarray  # float64
    total_bits: float = field(init=False)

    def __post_init__(self):
        bits = np.asarray(self.per_channel_bits, dtype=np.float64)
        object.__setattr__(self, "per_channel_bits", bits)
        if bits.size and bits.min() < 0.0:
            raise DomainError("bit totals must be non-negative")
        object.__setattr__(self, "total_bits", float(bits.sum()))


@dataclass(frozen=True)
class ComponentBits:
    """Baseline / limit / achieved bits for one information component."""

    baseline: float
    limit: float
    achieved: float | None = None


@dataclass(frozen=True)
class FrameBudget:
    """Bit totals of one frame, keyed by information component.

    Keys are among motion_side, motion_main, residual_side, residual_main;
    I frames carry no motion entries.
    """

    frame_kind: str
    components: dict

    def __post_init__(self):
        allowed = {"motion_side", "motion_main", "residual_side", "residual_main"}
        unknown = set(self.components) - allowed
        if unknown:
            raise ShapeError(f"unknown components {sorted(unknown)}")
        if self.frame_kind == "I" and any(k.startswith("motion") for k in self.components):
            raise ShapeError("I frames carry no motion components")


def counts_bits(counts, probs):
    """-sum(counts * log2(probs)) over the symbols that occur."""
    counts = np.asarray(counts, dtype=np.float64)
    nz = counts > 0
    if not nz.any():
        return 0.0
    return float(-np.dot(counts[nz], np.log2(probs[nz])))


def _limit_bits(hist):
    # Empirical entropy times count; 0 * log 0 terms drop out with the mask.
    if hist.total == 0:
        return 0.0
    return counts_bits(hist.counts, hist.counts / hist.total)


def expected_bits_factorized(tensor, pmfs):
    """Bits of a side tensor priced channel by channel with its pmf tables."""
    if len(pmfs) != tensor.channel_count:
        raise ShapeError(
            f"{len(pmfs)} pmf tables for {tensor.channel_count} channels"
        )
    bits = np.empty(tensor.channel_count)
    for c, pmf in enumerate(pmfs):
        if (pmf.alphabet_lo, pmf.alphabet_hi) != (tensor.alphabet_lo, tensor.alphabet_hi):
            raise AlphabetError(f"pmf alphabet mismatch on channel {c}")
        hist = build_channel_histogram(tensor, c)
        bits[c] = counts_bits(hist.counts, pmf.probs)
    return BitReport(bits)


def limit_bits_factorized(tensor):
    """Empirical per-channel entropy limit of a side tensor."""
    bits = np.empty(tensor.channel_count)
    for c in range(tensor.channel_count):
        bits[c] = _limit_bits(build_channel_histogram(tensor, c))
    return BitReport(bits)


def hyper_tables(scale_set, alphabet_lo, alphabet_hi):
    """Zero-mean Gaussian pmf tables for every scale of a scale set."""
    return [
        gaussian_pmf(float(s), alphabet_lo, alphabet_hi) for s in scale_set.scales
    ]


def expected_bits_hyper(latents, scale_set, tables=None):
    """Bits of a main latent set priced with its assigned Gaussian tables."""
    if latents.size and latents.scale_index.max() >= scale_set.size:
        raise DomainError("scale_index exceeds the scale set")
    if tables is None:
        tables = hyper_tables(scale_set, latents.alphabet_lo, latents.alphabet_hi)
    bits = np.zeros(scale_set.size)
    for c in range(scale_set.size):
        try:
            hist = build_group_histogram(latents, c)
        except EmptyGroupError:
            continue
        bits[c] = counts_bits(hist.counts, tables[c].probs)
    return BitReport(bits)


def limit_bits_hyper(latents, scale_set=None):
    """Empirical per-group entropy limit of a main latent set.

    The limit depends only on group membership, so the scale set is optional;
    when omitted the group count is inferred from the largest index present.
    """
    if scale_set is not None:
        if latents.size and latents.scale_index.max() >= scale_set.size:
            raise DomainError("scale_index exceeds the scale set")
        group_count = scale_set.size
    else:
        group_count = int(latents.scale_index.max()) + 1 if latents.size else 0
    bits = np.zeros(group_count)
    for c in range(group_count):
        try:
            hist = build_group_histogram(latents, c)
        except EmptyGroupError:
            continue
        bits[c] = _limit_bits(hist)
    return BitReport(bits)


def gap(baseline_bits, limit_bits):
    """Fraction of the baseline rate that a per-frame refit could remove."""
    if baseline_bits == 0.0:
        raise UndefinedMetricError("gap undefined for zero baseline bits")
    if baseline_bits < 0.0 or limit_bits < 0.0:
        raise DomainError("bit totals must be non-negative")
    if limit_bits > baseline_bits:
        if limit_bits > baseline_bits * (1.0 + GIBBS_RTOL):
            raise DomainError(
                f"limit {limit_bits} exceeds baseline {baseline_bits}"
            )
        return 0.0
    return 1.0 - limit_bits / baseline_bits


def saving(baseline_bits, achieved_bits):
    """Fraction of the baseline rate actually removed; negative if it grew."""
    if baseline_bits == 0.0:
        raise UndefinedMetricError("saving undefined for zero baseline bits")
    if baseline_bits < 0.0 or achieved_bits < 0.0:
        raise DomainError("bit totals must be non-negative")
    return 1.0 - achieved_bits / baseline_bits


def frame_totals(budget):
    """Sums a FrameBudget across its present components."""
    baseline = sum(c.baseline for c in budget.components.values())
    limit = sum(c.limit for c in budget.components.values())
    achieved_parts = [c.achieved for c in budget.components.values()]
    if any(a is None for a in achieved_parts):
        achieved = None
    else:
        achieved = sum(achieved_parts)
    return ComponentBits(baseline, limit, achieved)
