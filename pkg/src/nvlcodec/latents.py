"""Latent tensors, histograms, and discretized Gaussian pmf tables.

Side-information latents are small integer tensors coded per channel with a
learned pmf table. Main latents are coded per element with a zero-mean
Gaussian whose scale is picked from a predefined scale set. Everything here
is deterministic; pmf tables are floored and renormalized so every symbol
stays codable.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .errors import AlphabetError, DomainError, EmptyGroupError, ShapeError

# Probability floor for pmf tables. Floored tables keep every symbol codable
# and bound the per-symbol bit estimate at 20 bits.
PMF_FLOOR = 2.0 ** -20


def round_half_away(values):
    """Round to nearest integer, halves away from zero."""
    values = np.asarray(values, dtype=np.float64)
    return np.copysign(np.floor(np.abs(values) + 0.5), values).astype(np.int64)


def _validate_alphabet(lo, hi):
    if lo > hi:
        raise AlphabetError(f"alphabet_lo {lo} > alphabet_hi {hi}")
    if hi - lo + 1 >= 2 ** 20:
        raise AlphabetError(f"alphabet [{lo}, {hi}] too large for floored pmf tables")


def floor_and_normalize(probs):
    """Clips probabilities to PMF_FLOOR and renormalizes the excess mass.

    The result sums to 1 (up to float roundoff) with every entry >= PMF_FLOOR.
    A degenerate input with no mass above the floor becomes uniform.
    """
    probs = np.asarray(probs, dtype=np.float64)
    n = probs.size
    if n * PMF_FLOOR >= 1.0:
        raise AlphabetError(f"{n} symbols cannot all stay above the pmf floor")
    clipped = np.maximum(probs, PMF_FLOOR)
    excess = clipped.sum() - n * PMF_FLOOR
    if excess <= 0.0:
        return np.full(n, 1.0 / n)
    return PMF_FLOOR + (clipped - PMF_FLOOR) * ((1.0 - n * PMF_FLOOR) / excess)


@dataclass(frozen=True, eq=False)
class PmfTable:
    """Probability table over a contiguous integer alphabet [lo, hi]."""

    alphabet_lo: int
    alphabet_hi: int
    probs: np.ndarray  # float64, length hi - lo + 1

    def __post_init__(self):
        _validate_alphabet(self.alphabet_lo, self.alphabet_hi)
        probs = np.asarray(self.probs, dtype=np.float64)
        object.__setattr__(self, "probs", probs)
        if probs.shape != (self.alphabet_hi - self.alphabet_lo + 1,):
            raise ShapeError(
                f"pmf length {probs.shape} does not match alphabet "
                f"[{self.alphabet_lo}, {self.alphabet_hi}]"
            )
        if abs(probs.sum() - 1.0) > 1e-9:
            raise DomainError(f"pmf sums to {probs.sum()!r}, not 1")
        if probs.min() < PMF_FLOOR:
            raise DomainError("pmf has probabilities below the floor")

    @property
    def size(self):
        return self.alphabet_hi - self.alphabet_lo + 1

    def prob(self, symbol):
        if not self.alphabet_lo <= symbol <= self.alphabet_hi:
            raise AlphabetError(f"symbol {symbol} outside [{self.alphabet_lo}, {self.alphabet_hi}]")
        return float(self.probs[symbol - self.alphabet_lo])

    def entropy_bits(self):
        """Shannon entropy of the table in bits."""
        return float(-np.dot(self.probs, np.log2(self.probs)))

    def __eq__(self, other):
        if not isinstance(other, PmfTable):
            return NotImplemented
        return (
            self.alphabet_lo == other.alphabet_lo
            and self.alphabet_hi == other.alphabet_hi
            and np.array_equal(self.probs, other.probs)
        )


@dataclass(frozen=True, eq=False)
class SymbolTensor:
    """Integer latent tensor shaped (height, width, channels)."""

    symbols: np.ndarray  # int, 3-d
    alphabet_lo: int
    alphabet_hi: int

    def __post_init__(self):
        _validate_alphabet(self.alphabet_lo, self.alphabet_hi)
        symbols = np.asarray(self.symbols)
        if not np.issubdtype(symbols.dtype, np.integer):
            raise ShapeError("symbols must be integers")
        symbols = symbols.astype(np.int64, copy=False)
        object.__setattr__(self, "symbols", symbols)
        if symbols.ndim != 3:
            raise ShapeError(f"expected (h, w, channels), got shape {symbols.shape}")
        if min(symbols.shape) < 1:
            raise ShapeError(f"tensor dimensions must be positive, got {symbols.shape}")
        if not self.alphabet_lo <= 0 <= self.alphabet_hi:
            raise AlphabetError("side alphabets must contain 0")
        if symbols.min() < self.alphabet_lo or symbols.max() > self.alphabet_hi:
            raise AlphabetError(
                f"symbols outside alphabet [{self.alphabet_lo}, {self.alphabet_hi}]"
            )

    @property
    def channel_count(self):
        return self.symbols.shape[2]

    def channel(self, c):
        if not 0 <= c < self.channel_count:
            raise IndexError(f"channel {c} out of range [0, {self.channel_count})")
        return self.symbols[:, :, c]

    def __eq__(self, other):
        if not isinstance(other, SymbolTensor):
            return NotImplemented
        return (
            self.alphabet_lo == other.alphabet_lo
            and self.alphabet_hi == other.alphabet_hi
            and np.array_equal(self.symbols, other.symbols)
        )


@dataclass(frozen=True, eq=False)
class ScaleSet:
    """Predefined coding scales, strictly increasing and positive."""

    scales: np.ndarray  # float64, 1-d

    def __post_init__(self):
        scales = np.asarray(self.scales, dtype=np.float64)
        object.__setattr__(self, "scales", scales)
        if scales.ndim != 1 or scales.size == 0:
            raise ShapeError("scale set must be a non-empty 1-d array")
        if scales[0] <= 0.0 or np.any(np.diff(scales) <= 0.0):
            raise DomainError("scales must be positive and strictly increasing")

    @property
    def size(self):
        return int(self.scales.size)

    def __eq__(self, other):
        if not isinstance(other, ScaleSet):
            return NotImplemented
        return np.array_equal(self.scales, other.scales)


@dataclass(frozen=True, eq=False)
class GaussianLatentSet:
    """Flattened main-latent symbols with their assigned scale indices."""

    symbols: np.ndarray  # int, 1-d, centered residuals
    scale_index: np.ndarray  # int, 1-d, index into a ScaleSet
    alphabet_lo: int
    alphabet_hi: int

    def __post_init__(self):
        _validate_alphabet(self.alphabet_lo, self.alphabet_hi)
        symbols = np.asarray(self.symbols)
        scale_index = np.asarray(self.scale_index)
        if not np.issubdtype(symbols.dtype, np.integer):
            raise ShapeError("symbols must be integers")
        if not np.issubdtype(scale_index.dtype, np.integer):
            raise ShapeError("scale_index must be integers")
        symbols = symbols.astype(np.int64, copy=False)
        scale_index = scale_index.astype(np.int64, copy=False)
        object.__setattr__(self, "symbols", symbols)
        object.__setattr__(self, "scale_index", scale_index)
        if symbols.ndim != 1 or scale_index.ndim != 1:
            raise ShapeError("symbols and scale_index must be 1-d")
        if symbols.shape != scale_index.shape:
            raise ShapeError(
                f"symbols length {symbols.size} != scale_index length {scale_index.size}"
            )
        if symbols.size and (
            symbols.min() < self.alphabet_lo or symbols.max() > self.alphabet_hi
        ):
            raise AlphabetError(
                f"symbols outside alphabet [{self.alphabet_lo}, {self.alphabet_hi}]"
            )
        if symbols.size and scale_index.min() < 0:
            raise DomainError("scale_index must be non-negative")

    @property
    def size(self):
        return int(self.symbols.size)

    def __eq__(self, other):
        if not isinstance(other, GaussianLatentSet):
            return NotImplemented
        return (
            self.alphabet_lo == other.alphabet_lo
            and self.alphabet_hi == other.alphabet_hi
            and np.array_equal(self.symbols, other.symbols)
            and np.array_equal(self.scale_index, other.scale_index)
        )


@dataclass(frozen=True, eq=False)
class ChannelHistogram:
    """Symbol counts over a channel's alphabet."""

    alphabet_lo: int
    alphabet_hi: int
    counts: np.ndarray  # int64, length hi - lo + 1
    total: int = field(init=False)

    def __post_init__(self):
        _validate_alphabet(self.alphabet_lo, self.alphabet_hi)
        counts = np.asarray(self.counts, dtype=np.int64)
        object.__setattr__(self, "counts", counts)
        if counts.shape != (self.alphabet_hi - self.alphabet_lo + 1,):
            raise ShapeError("counts length does not match alphabet")
        if counts.min() < 0:
            raise DomainError("counts must be non-negative")
        total = int(counts.sum())
        if total <= 0:
            raise DomainError("histogram must hold at least one count")
        object.__setattr__(self, "total", total)

    def normalized(self):
        """Empirical pmf; zero where the count is zero (not floored)."""
        return self.counts / self.total


def build_channel_histogram(tensor, channel):
    """Counts the symbols of one channel of a SymbolTensor."""
    values = tensor.channel(channel)
    counts = np.bincount(
        (values - tensor.alphabet_lo).ravel(),
        minlength=tensor.alphabet_hi - tensor.alphabet_lo + 1,
    )
    return ChannelHistogram(tensor.alphabet_lo, tensor.alphabet_hi, counts)


def build_group_histogram(latents, scale_index):
    """Counts the symbols assigned to one scale of a GaussianLatentSet.

    Raises EmptyGroupError when no element uses the scale; callers skip such
    groups.
    """
    mask = latents.scale_index == scale_index
    if not mask.any():
        raise EmptyGroupError(f"no elements assigned to scale index {scale_index}")
    counts = np.bincount(
        latents.symbols[mask] - latents.alphabet_lo,
        minlength=latents.alphabet_hi - latents.alphabet_lo + 1,
    )
    return ChannelHistogram(latents.alphabet_lo, latents.alphabet_hi, counts)


def gaussian_mass(mean, sigma, alphabet_lo, alphabet_hi):
    """Raw discretized Gaussian masses with open tails folded into the ends.

    Interior symbol v gets CDF(v + 0.5) - CDF(v - 0.5); the boundary symbols
    absorb everything beyond them so the masses sum to 1 before flooring.
    """
    if sigma <= 0.0:
        raise DomainError(f"scale must be positive, got {sigma}")
    edges = np.arange(alphabet_lo, alphabet_hi + 1, dtype=np.float64)
    upper = ndtr((edges + 0.5 - mean) / sigma)
    lower = ndtr((edges - 0.5 - mean) / sigma)
    probs = upper - lower
    probs[0] = upper[0]
    probs[-1] = 1.0 - lower[-1]
    return probs


def gaussian_pmf(sigma, alphabet_lo, alphabet_hi):
    """Floored zero-mean discretized Gaussian table over [lo, hi]."""
    _validate_alphabet(alphabet_lo, alphabet_hi)
    probs = floor_and_normalize(gaussian_mass(0.0, sigma, alphabet_lo, alphabet_hi))
    return PmfTable(alphabet_lo, alphabet_hi, probs)


def center_and_assign(raw, means, predicted_scales, scale_set, alphabet_lo, alphabet_hi):
    """Centers raw latents on their predicted means and assigns coding scales.

    Symbols are round-half-away-from-zero residuals clipped to the alphabet.
    Each element gets the smallest predefined scale >= its predicted scale;
    predictions above the largest scale clamp to it.
    """
    raw = np.asarray(raw, dtype=np.float64).ravel()
    means = np.asarray(means, dtype=np.float64).ravel()
    predicted = np.asarray(predicted_scales, dtype=np.float64).ravel()
    if not (raw.shape == means.shape == predicted.shape):
        raise ShapeError("raw, means, and predicted_scales must have equal lengths")
    if predicted.size and predicted.min() <= 0.0:
        raise DomainError("predicted scales must be positive")
    symbols = np.clip(round_half_away(raw - means), alphabet_lo, alphabet_hi)
    index = np.searchsorted(scale_set.scales, predicted, side="left")
    index = np.minimum(index, scale_set.size - 1)
    return GaussianLatentSet(symbols, index.astype(np.int64), alphabet_lo, alphabet_hi)
