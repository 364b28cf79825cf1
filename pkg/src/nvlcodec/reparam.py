"""Per-channel pmf refits and their 10-bit grid quantization.

A factorized channel is refit with a truncated Gaussian mixture (K means,
K log-sigmas, K-1 stick-breaking fractions, 3K-1 parameters); a Gaussian
scale group is refit with a single zero-mean log-sigma. Every transmitted
parameter is an index on a 1024-level uniform grid, so fits snap to the grid
before they are priced or compared: the decoder sees indices, nothing else.

Fitting is EM followed by a deterministic coordinate search over grid
indices. EM lands near the optimum in continuous space; the search walks the
quantized objective (count-weighted bits under the floored table) to a grid
local maximum, which is what the gain computation actually pays for.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .errors import AlphabetError, DomainError, ShapeError
from .latents import (
    PMF_FLOOR,
    PmfTable,
    floor_and_normalize,
    gaussian_mass,
    round_half_away,
)

RANGES_VERSION = 1
GRID_LEVELS = 1024
INDEX_BITS = 10
SIGMA_MIN = 0.05
SIGMA_MAX = 64.0


@dataclass(frozen=True)
class ParamRanges:
    """Value ranges behind the 10-bit parameter grid (version RANGES_VERSION).

    Means span the coding alphabet; log-sigma spans [log SIGMA_MIN,
    log SIGMA_MAX]; stick-breaking fractions span [0, 1].
    """

    mean_lo: float
    mean_hi: float
    log_sigma_lo: float = math.log(SIGMA_MIN)
    log_sigma_hi: float = math.log(SIGMA_MAX)

    def __post_init__(self):
        if not self.mean_lo < self.mean_hi:
            raise DomainError("mean range must be non-degenerate")
        if not self.log_sigma_lo < self.log_sigma_hi:
            raise DomainError("log-sigma range must be non-degenerate")

    @classmethod
    def for_alphabet(cls, alphabet_lo, alphabet_hi):
        return cls(mean_lo=float(alphabet_lo), mean_hi=float(alphabet_hi))


def quantize_value(value, lo, hi):
    """Index of `value` on the uniform grid over [lo, hi], half away from zero."""
    step = (value - lo) / (hi - lo) * (GRID_LEVELS - 1)
    idx = int(round_half_away(step))
    return min(max(idx, 0), GRID_LEVELS - 1)


def dequantize_value(index, lo, hi):
    if not 0 <= index < GRID_LEVELS:
        raise DomainError(f"grid index {index} outside [0, {GRID_LEVELS})")
    return lo + index / (GRID_LEVELS - 1) * (hi - lo)


@dataclass(frozen=True)
class QuantizedParamCode:
    """Grid indices as transmitted, INDEX_BITS bits each."""

    indices: tuple

    def __post_init__(self):
        for idx in self.indices:
            if not 0 <= idx < GRID_LEVELS:
                raise DomainError(f"grid index {idx} outside [0, {GRID_LEVELS})")

    @property
    def bit_width(self):
        return INDEX_BITS * len(self.indices)


def mixture_code_width(k):
    """Bits to transmit a K-component mixture refit: 10(3K-1)."""
    if k < 1:
        raise DomainError("mixture needs at least one component")
    return INDEX_BITS * (3 * k - 1)


ZERO_MEAN_CODE_WIDTH = INDEX_BITS  # a single log-sigma index


@dataclass(frozen=True, eq=False)
class MixtureParams:
    """Truncated Gaussian mixture over the alphabet [truncation_lo, truncation_hi]."""

    means: np.ndarray
    sigmas: np.ndarray
    weights: np.ndarray
    truncation_lo: float
    truncation_hi: float

    def __post_init__(self):
        means = np.asarray(self.means, dtype=np.float64)
        sigmas = np.asarray(self.sigmas, dtype=np.float64)
        weights = np.asarray(self.weights, dtype=np.float64)
        for name, arr in (("means", means), ("sigmas", sigmas), ("weights", weights)):
            object.__setattr__(self, name, arr)
        if not (means.shape == sigmas.shape == weights.shape) or means.ndim != 1:
            raise ShapeError("means, sigmas, weights must share a 1-d shape")
        if means.size < 1:
            raise ShapeError("mixture needs at least one component")
        if sigmas.min() < SIGMA_MIN * (1.0 - 1e-9):
            raise DomainError(f"sigmas must stay at or above SIGMA_MIN = {SIGMA_MIN}")
        if weights.min() < 0.0 or abs(weights.sum() - 1.0) > 1e-9:
            raise DomainError("weights must be non-negative and sum to 1")
        if self.truncation_lo >= self.truncation_hi:
            raise DomainError("truncation bounds must be ordered")
        if means.min() < self.truncation_lo or means.max() > self.truncation_hi:
            raise DomainError("means must lie within the truncation bounds")

    @property
    def component_count(self):
        return int(self.means.size)

    def __eq__(self, other):
        if not isinstance(other, MixtureParams):
            return NotImplemented
        return (
            np.array_equal(self.means, other.means)
            and np.array_equal(self.sigmas, other.sigmas)
            and np.array_equal(self.weights, other.weights)
            and self.truncation_lo == other.truncation_lo
            and self.truncation_hi == other.truncation_hi
        )


@dataclass(frozen=True)
class ZeroMeanParams:
    """Zero-mean truncated Gaussian over the alphabet [truncation_lo, truncation_hi]."""

    sigma: float
    truncation_lo: float
    truncation_hi: float

    def __post_init__(self):
        if self.sigma < SIGMA_MIN * (1.0 - 1e-9):
            raise DomainError(f"sigma must stay at or above SIGMA_MIN = {SIGMA_MIN}")
        if self.truncation_lo >= self.truncation_hi:
            raise DomainError("truncation bounds must be ordered")


def _stick_fractions(weights):
    # weight vector -> K-1 stick-breaking fractions in [0, 1]
    fractions = []
    remaining = 1.0
    for w in weights[:-1]:
        fractions.append(0.0 if remaining <= 0.0 else min(w / remaining, 1.0))
        remaining -= w
    return fractions


def _stick_weights(fractions, k):
    weights = np.empty(k)
    remaining = 1.0
    for i, v in enumerate(fractions):
        weights[i] = v * remaining
        remaining *= 1.0 - v
    weights[k - 1] = remaining
    return weights


def quantize_params(params, ranges):
    """Snaps fit parameters to the grid; mixtures must be sorted by mean."""
    if isinstance(params, ZeroMeanParams):
        idx = quantize_value(math.log(params.sigma), ranges.log_sigma_lo, ranges.log_sigma_hi)
        return QuantizedParamCode((idx,))
    means = [quantize_value(m, ranges.mean_lo, ranges.mean_hi) for m in params.means]
    sigmas = [
        quantize_value(math.log(s), ranges.log_sigma_lo, ranges.log_sigma_hi)
        for s in params.sigmas
    ]
    sticks = [quantize_value(v, 0.0, 1.0) for v in _stick_fractions(params.weights)]
    return QuantizedParamCode(tuple(means + sigmas + sticks))


def dequantize_params(code, ranges, k=None):
    """Inverse of quantize_params; k=None decodes a zero-mean code.

    Truncation bounds come from the mean range, which the container format
    pins to the coding alphabet, so both sides reconstruct identical params.
    """
    if k is None:
        if len(code.indices) != 1:
            raise ShapeError("zero-mean code holds exactly one index")
        log_sigma = dequantize_value(code.indices[0], ranges.log_sigma_lo, ranges.log_sigma_hi)
        return ZeroMeanParams(math.exp(log_sigma), ranges.mean_lo, ranges.mean_hi)
    if len(code.indices) != 3 * k - 1:
        raise ShapeError(f"mixture code for K={k} holds {3 * k - 1} indices")
    means = np.array(
        [dequantize_value(i, ranges.mean_lo, ranges.mean_hi) for i in code.indices[:k]]
    )
    sigmas = np.exp(
        [
            dequantize_value(i, ranges.log_sigma_lo, ranges.log_sigma_hi)
            for i in code.indices[k : 2 * k]
        ]
    )
    fractions = [dequantize_value(i, 0.0, 1.0) for i in code.indices[2 * k :]]
    return MixtureParams(
        means, sigmas, _stick_weights(fractions, k), ranges.mean_lo, ranges.mean_hi
    )


def reparam_pmf(params, alphabet_lo, alphabet_hi):
    """Floored pmf table realized by refit parameters over their alphabet."""
    if (params.truncation_lo, params.truncation_hi) != (
        float(alphabet_lo),
        float(alphabet_hi),
    ):
        raise DomainError(
            f"params truncated to [{params.truncation_lo}, {params.truncation_hi}] "
            f"do not cover alphabet [{alphabet_lo}, {alphabet_hi}]"
        )
    if isinstance(params, ZeroMeanParams):
        mass = gaussian_mass(0.0, params.sigma, alphabet_lo, alphabet_hi)
    else:
        mass = 0.0
        for m, s, w in zip(params.means, params.sigmas, params.weights):
            if w > 0.0:
                mass = mass + w * gaussian_mass(m, s, alphabet_lo, alphabet_hi)
        if np.isscalar(mass):
            raise DomainError("mixture has no mass")
    return PmfTable(alphabet_lo, alphabet_hi, floor_and_normalize(mass))


def _code_bits(hist, code, ranges, k):
    # count-weighted bits of the histogram under the dequantized code
    params = dequantize_params(code, ranges, k)
    pmf = reparam_pmf(params, hist.alphabet_lo, hist.alphabet_hi)
    nz = hist.counts > 0
    return float(-np.dot(hist.counts[nz], np.log2(pmf.probs[nz])))


# log-sigma grid tables for the exhaustive zero-mean fit, keyed by alphabet
# and ranges; each is (GRID_LEVELS x alphabet) of -log2 floored probabilities
_ZERO_MEAN_CACHE = {}
_ZERO_MEAN_CACHE_CAP = 16


def _zero_mean_table(alphabet_lo, alphabet_hi, ranges):
    key = (alphabet_lo, alphabet_hi, ranges.log_sigma_lo, ranges.log_sigma_hi)
    table = _ZERO_MEAN_CACHE.get(key)
    if table is None:
        rows = np.empty((GRID_LEVELS, alphabet_hi - alphabet_lo + 1))
        for j in range(GRID_LEVELS):
            sigma = math.exp(dequantize_value(j, ranges.log_sigma_lo, ranges.log_sigma_hi))
            rows[j] = -np.log2(
                floor_and_normalize(gaussian_mass(0.0, sigma, alphabet_lo, alphabet_hi))
            )
        if len(_ZERO_MEAN_CACHE) >= _ZERO_MEAN_CACHE_CAP:
            _ZERO_MEAN_CACHE.pop(next(iter(_ZERO_MEAN_CACHE)))
        _ZERO_MEAN_CACHE[key] = rows
        table = rows
    return table


def fit_zero_mean(hist, ranges):
    """Exhaustive grid argmax of the zero-mean likelihood; ties pick the
    lowest index."""
    table = _zero_mean_table(hist.alphabet_lo, hist.alphabet_hi, ranges)
    bits = table @ hist.counts
    j = int(np.argmin(bits))
    return ZeroMeanParams(
        math.exp(dequantize_value(j, ranges.log_sigma_lo, ranges.log_sigma_hi)),
        float(hist.alphabet_lo),
        float(hist.alphabet_hi),
    )


def _em_mixture(hist, k):
    # EM on the discretized mixture over the histogram's alphabet.
    values = np.arange(hist.alphabet_lo, hist.alphabet_hi + 1, dtype=np.float64)
    counts = hist.counts.astype(np.float64)
    total = counts.sum()
    # quantile init: component k at the (k+1)/(K+1) count quantile
    cum = np.cumsum(counts)
    targets = (np.arange(1, k + 1) / (k + 1)) * total
    means = values[np.searchsorted(cum, targets, side="left").clip(0, values.size - 1)]
    mean_all = float(np.dot(counts, values) / total)
    var_all = float(np.dot(counts, (values - mean_all) ** 2) / total)
    sigmas = np.full(k, max(math.sqrt(var_all), SIGMA_MIN))
    weights = np.full(k, 1.0 / k)
    edges_plus = values + 0.5
    edges_minus = values - 0.5
    last_ll = -np.inf
    for _ in range(100):
        # all components' tail-folded masses at once
        upper = ndtr((edges_plus[None, :] - means[:, None]) / sigmas[:, None])
        lower = ndtr((edges_minus[None, :] - means[:, None]) / sigmas[:, None])
        comp = upper - lower
        comp[:, 0] = upper[:, 0]
        comp[:, -1] = 1.0 - lower[:, -1]
        joint = weights[:, None] * comp
        mix = joint.sum(axis=0)
        ll = float(np.dot(counts, np.log(np.maximum(mix, 1e-300))))
        resp = joint / np.maximum(mix, 1e-300)[None, :]
        mass = resp @ counts
        dead = mass <= 0.0
        mass = np.maximum(mass, 1e-300)
        weights = mass / mass.sum()
        means = np.clip((resp * values[None, :]) @ counts / mass, values[0], values[-1])
        var = (resp * (values[None, :] - means[:, None]) ** 2) @ counts / mass
        sigmas = np.clip(np.sqrt(np.maximum(var, 0.0)), SIGMA_MIN, SIGMA_MAX)
        if dead.any():
            # dead components restart at the global moments
            means[dead] = mean_all
            sigmas[dead] = max(math.sqrt(var_all), SIGMA_MIN)
        if abs(ll - last_ll) < 1e-8 * max(abs(ll), 1.0):
            break
        last_ll = ll
    order = np.lexsort((sigmas, means))
    return MixtureParams(
        means[order],
        sigmas[order],
        np.maximum(weights[order], 0.0) / weights.sum(),
        float(hist.alphabet_lo),
        float(hist.alphabet_hi),
    )


class _MixtureObjective:
    """Prices candidate index vectors for the polish search.

    Runs the float ops of _code_bits (dequantize, per-component tail-folded
    masses, floored table, count-weighted bits) in the same order, so every
    probe is bit-identical to the public path, but skips the per-call object
    construction and validation. A probe that moves one mean or sigma index
    refreshes only that component's mass row; a stick move reuses them all.
    """

    def __init__(self, hist, ranges, k):
        self._ranges = ranges
        self._k = k
        edges = np.arange(hist.alphabet_lo, hist.alphabet_hi + 1, dtype=np.float64)
        self._edges_plus = edges + 0.5
        self._edges_minus = edges - 0.5
        size = edges.size
        self._size = size
        self._floor_total = size * PMF_FLOOR
        if self._floor_total >= 1.0:
            raise AlphabetError(f"{size} symbols cannot all stay above the pmf floor")
        self._floor_excess = 1.0 - size * PMF_FLOOR
        self._nz_idx = np.flatnonzero(hist.counts > 0)
        self._counts_nz = hist.counts[self._nz_idx].astype(np.float64)
        self._means = None
        self._sigmas = None
        self._weights = None
        self._comps = None
        self._pending = None

    def _component(self, mean, sigma):
        # gaussian_mass against the precomputed half-offset edge grids
        upper = ndtr((self._edges_plus - mean) / sigma)
        lower = ndtr((self._edges_minus - mean) / sigma)
        probs = upper - lower
        probs[0] = upper[0]
        probs[-1] = 1.0 - lower[-1]
        return probs

    def _bits(self, weights, comps):
        mass = 0.0
        for w, comp in zip(weights, comps):
            if w > 0.0:
                mass = mass + w * comp
        # floor_and_normalize with the size-dependent scalars hoisted
        clipped = np.maximum(mass, PMF_FLOOR)
        excess = clipped.sum() - self._floor_total
        if excess <= 0.0:
            probs = np.full(self._size, 1.0 / self._size)
        else:
            probs = PMF_FLOOR + (clipped - PMF_FLOOR) * (self._floor_excess / excess)
        return float(-np.dot(self._counts_nz, np.log2(probs.take(self._nz_idx))))

    def _dequant_sigmas(self, indices):
        return np.exp(
            [
                dequantize_value(i, self._ranges.log_sigma_lo, self._ranges.log_sigma_hi)
                for i in indices[self._k : 2 * self._k]
            ]
        )

    def seed(self, indices):
        k = self._k
        r = self._ranges
        self._means = np.array(
            [dequantize_value(i, r.mean_lo, r.mean_hi) for i in indices[:k]]
        )
        self._sigmas = self._dequant_sigmas(indices)
        fractions = [dequantize_value(i, 0.0, 1.0) for i in indices[2 * k :]]
        self._weights = _stick_weights(fractions, k)
        self._comps = [self._component(self._means[i], self._sigmas[i]) for i in range(k)]
        self._pending = None
        return self._bits(self._weights, self._comps)

    def probe(self, indices, pos):
        # Prices `indices`, which differ from the seeded/committed state at
        # `pos` only; nothing is cached until the caller accepts via commit.
        k = self._k
        if pos >= 2 * k:
            fractions = [dequantize_value(i, 0.0, 1.0) for i in indices[2 * k :]]
            weights = _stick_weights(fractions, k)
            self._pending = (None, None, None, weights, None)
            return self._bits(weights, self._comps)
        if pos < k:
            j = pos
            mean = dequantize_value(indices[j], self._ranges.mean_lo, self._ranges.mean_hi)
            sigmas = None
            comp = self._component(mean, self._sigmas[j])
        else:
            j = pos - k
            mean = None
            sigmas = self._dequant_sigmas(indices)
            comp = self._component(self._means[j], sigmas[j])
        comps = list(self._comps)
        comps[j] = comp
        self._pending = (j, mean, sigmas, None, comp)
        return self._bits(self._weights, comps)

    def commit(self):
        j, mean, sigmas, weights, comp = self._pending
        self._pending = None
        if weights is not None:
            self._weights = weights
            return
        self._comps[j] = comp
        if mean is not None:
            self._means[j] = mean
        if sigmas is not None:
            self._sigmas = sigmas


# Search schedules. One component is a 2-index problem that is searched to
# its grid optimum; larger mixtures start from an EM seed that is already
# close, so a short fine-grained walk buys nearly all of the attainable
# bits at a fraction of the probes.
_SCHEDULE_EXACT = ((64, 50), (8, 50), (1, 50))
_SCHEDULE_SEEDED = ((8, 8), (1, 8))


def _polish_code(hist, code, ranges, k):
    # Coordinate descent over grid indices, coarse to fine. Means stay in
    # ascending index order so the transmitted form remains canonical.
    # Visited vectors are memoized: the search re-prices old neighbors on
    # every pass (the closing no-improvement round re-prices all of them),
    # and a repeat can never beat `best`, so hits skip probe and commit.
    indices = list(code.indices)
    objective = _MixtureObjective(hist, ranges, k)
    best = objective.seed(indices)
    seen = {tuple(indices): best}

    def mean_order_ok(idx):
        return all(idx[i] <= idx[i + 1] for i in range(k - 1))

    schedule = _SCHEDULE_EXACT if k == 1 else _SCHEDULE_SEEDED
    for step, round_cap in schedule:
        improved = True
        rounds = 0
        while improved and rounds < round_cap:
            improved = False
            rounds += 1
            for pos in range(len(indices)):
                for delta in (step, -step):
                    trial = indices[pos] + delta
                    if not 0 <= trial < GRID_LEVELS:
                        continue
                    candidate = indices.copy()
                    candidate[pos] = trial
                    if pos < k and not mean_order_ok(candidate):
                        continue
                    key = tuple(candidate)
                    if key not in seen:
                        bits = objective.probe(candidate, pos)
                        seen[key] = bits
                        if bits < best:
                            best = bits
                            indices = candidate
                            objective.commit()
                            improved = True
    return QuantizedParamCode(tuple(indices)), best


def fit_mixture(hist, k, ranges):
    """EM plus grid polish; returns grid-snapped MixtureParams."""
    if k < 1:
        raise DomainError("mixture needs at least one component")
    if k == 1:
        # E-step is trivial for one component: EM reduces to the moments
        values = np.arange(hist.alphabet_lo, hist.alphabet_hi + 1, dtype=np.float64)
        counts = hist.counts.astype(np.float64)
        mean = float(np.dot(counts, values) / hist.total)
        var = float(np.dot(counts, (values - mean) ** 2) / hist.total)
        seed = MixtureParams(
            np.array([mean]),
            np.array([min(max(math.sqrt(var), SIGMA_MIN), SIGMA_MAX)]),
            np.array([1.0]),
            float(hist.alphabet_lo),
            float(hist.alphabet_hi),
        )
    else:
        seed = _em_mixture(hist, k)
    code, _ = _polish_code(hist, quantize_params(seed, ranges), ranges, k)
    return dequantize_params(code, ranges, k)
