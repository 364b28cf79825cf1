"""Tests for parametric refits, parameter quantization, and their pmfs."""

import numpy as np
import pytest
from scipy.special import ndtr

from nvlcodec.accounting import counts_bits, limit_bits_factorized
from nvlcodec.errors import DomainError, ShapeError
from nvlcodec.latents import (
    PMF_FLOOR,
    ChannelHistogram,
    SymbolTensor,
    gaussian_pmf,
)
from nvlcodec.rangecoder import pmf_to_freq
from nvlcodec.reparam import (
    GRID_LEVELS,
    INDEX_BITS,
    SIGMA_MAX,
    SIGMA_MIN,
    ZERO_MEAN_CODE_WIDTH,
    MixtureParams,
    ParamRanges,
    QuantizedParamCode,
    ZeroMeanParams,
    dequantize_params,
    dequantize_value,
    fit_mixture,
    fit_zero_mean,
    mixture_code_width,
    quantize_params,
    quantize_value,
    reparam_pmf,
)


def spike_histogram(lo, hi, at, count=500):
    counts = np.zeros(hi - lo + 1, dtype=np.int64)
    counts[at - lo] = count
    return ChannelHistogram(lo, hi, counts)


def gaussian_histogram(sigma, lo, hi, total=1_000_000):
    probs = gaussian_pmf(sigma, lo, hi).probs
    return ChannelHistogram(lo, hi, np.round(probs * total).astype(np.int64))


def zero_mean_grid_costs(hist):
    """Bits of every quantized log-sigma level, derived independently.

    Replicates truncation, tail folding, flooring, and renormalization
    from first principles so the fit has something honest to match.
    """
    lo, hi = hist.alphabet_lo, hist.alphabet_hi
    values = np.arange(lo, hi + 1, dtype=np.float64)
    n = values.size
    levels = np.arange(GRID_LEVELS, dtype=np.float64) / (GRID_LEVELS - 1)
    log_lo, log_hi = np.log(SIGMA_MIN), np.log(SIGMA_MAX)
    sigmas = np.exp(log_lo + levels * (log_hi - log_lo))
    upper = ndtr((values[None, :] + 0.5) / sigmas[:, None])
    lower = ndtr((values[None, :] - 0.5) / sigmas[:, None])
    mass = upper - lower
    mass[:, 0] = upper[:, 0]
    mass[:, -1] = 1.0 - lower[:, -1]
    clipped = np.maximum(mass, PMF_FLOOR)
    excess = clipped.sum(axis=1) - n * PMF_FLOOR
    probs = PMF_FLOOR + (clipped - PMF_FLOOR) * (
        (1.0 - n * PMF_FLOOR) / excess
    )[:, None]
    occupied = hist.counts > 0
    return -(np.log2(probs[:, occupied]) @ hist.counts[occupied].astype(np.float64))


class TestParamRanges:
    def test_alphabet_bounds_become_mean_bounds(self):
        ranges = ParamRanges.for_alphabet(-16, 16)
        assert ranges.mean_lo == -16.0
        assert ranges.mean_hi == 16.0
        assert ranges.log_sigma_lo == pytest.approx(np.log(SIGMA_MIN))
        assert ranges.log_sigma_hi == pytest.approx(np.log(SIGMA_MAX))

    def test_degenerate_mean_range_rejected(self):
        with pytest.raises(DomainError):
            ParamRanges(2.0, 2.0)


class TestScalarQuantizer:
    def test_zero_mean_rounds_away_to_512(self):
        # 0 sits exactly between grid indices 511 and 512 on [-16, 16].
        assert quantize_value(0.0, -16.0, 16.0) == 512

    def test_endpoints_map_to_grid_ends(self):
        assert quantize_value(-16.0, -16.0, 16.0) == 0
        assert quantize_value(16.0, -16.0, 16.0) == 1023
        assert dequantize_value(0, -16.0, 16.0) == -16.0
        assert dequantize_value(1023, -16.0, 16.0) == 16.0

    def test_out_of_range_values_clamp(self):
        assert quantize_value(-40.0, -16.0, 16.0) == 0
        assert quantize_value(40.0, -16.0, 16.0) == 1023

    def test_round_trip_error_bounded_by_half_step(self):
        rng = np.random.default_rng(12)
        half_step = 32.0 / (2 * (GRID_LEVELS - 1))
        for _ in range(500):
            value = float(rng.uniform(-16.0, 16.0))
            index = quantize_value(value, -16.0, 16.0)
            back = dequantize_value(index, -16.0, 16.0)
            assert abs(back - value) <= half_step * (1 + 1e-12)

    def test_quantize_monotone_nondecreasing(self):
        values = np.sort(np.random.default_rng(13).uniform(-16, 16, 300))
        indices = [quantize_value(float(v), -16.0, 16.0) for v in values]
        assert all(a <= b for a, b in zip(indices, indices[1:]))

    def test_dequantize_rejects_indices_off_grid(self):
        with pytest.raises(DomainError):
            dequantize_value(1024, -16.0, 16.0)
        with pytest.raises(DomainError):
            dequantize_value(-1, -16.0, 16.0)


class TestCodeWidths:
    def test_mixture_code_scales_with_component_count(self):
        assert mixture_code_width(1) == 20
        assert mixture_code_width(2) == 50
        assert mixture_code_width(3) == 80
        assert mixture_code_width(4) == 110

    def test_zero_mean_code_is_one_index(self):
        assert ZERO_MEAN_CODE_WIDTH == INDEX_BITS == 10

    def test_code_bit_width_counts_indices(self):
        code = QuantizedParamCode((1, 2, 3, 4, 5))
        assert code.bit_width == 50

    def test_component_count_must_be_positive(self):
        with pytest.raises(DomainError):
            mixture_code_width(0)


class TestParamValidation:
    def test_mixture_weights_must_sum_to_one(self):
        with pytest.raises(DomainError):
            MixtureParams(
                np.array([0.0, 1.0]),
                np.array([1.0, 1.0]),
                np.array([0.7, 0.2]),
                -4.0,
                4.0,
            )

    def test_mixture_sigma_floor_enforced(self):
        with pytest.raises(DomainError):
            MixtureParams(
                np.array([0.0]),
                np.array([0.01]),
                np.array([1.0]),
                -4.0,
                4.0,
            )

    def test_mixture_means_must_sit_inside_truncation(self):
        with pytest.raises(DomainError):
            MixtureParams(
                np.array([5.0]),
                np.array([1.0]),
                np.array([1.0]),
                -4.0,
                4.0,
            )

    def test_zero_mean_sigma_floor_enforced(self):
        with pytest.raises(DomainError):
            ZeroMeanParams(0.001, -4.0, 4.0)


class TestParamCodes:
    def test_zero_mean_round_trip_is_identity_on_codes(self):
        ranges = ParamRanges.for_alphabet(-8, 8)
        rng = np.random.default_rng(14)
        for _ in range(100):
            code = QuantizedParamCode((int(rng.integers(0, GRID_LEVELS)),))
            params = dequantize_params(code, ranges)
            assert quantize_params(params, ranges) == code

    def test_mixture_round_trip_is_identity_on_codes(self):
        ranges = ParamRanges.for_alphabet(-8, 8)
        rng = np.random.default_rng(15)
        for _ in range(100):
            k = int(rng.integers(1, 4))
            indices = tuple(
                int(v) for v in rng.integers(0, GRID_LEVELS, 3 * k - 1)
            )
            code = QuantizedParamCode(indices)
            params = dequantize_params(code, ranges, k=k)
            assert quantize_params(params, ranges) == code

    def test_wrong_index_count_rejected(self):
        ranges = ParamRanges.for_alphabet(-8, 8)
        with pytest.raises(ShapeError):
            dequantize_params(QuantizedParamCode((1, 2)), ranges)
        with pytest.raises(ShapeError):
            dequantize_params(QuantizedParamCode((1, 2, 3)), ranges, k=2)


class TestFitZeroMean:
    def test_point_mass_pins_sigma_to_floor(self):
        ranges = ParamRanges.for_alphabet(-16, 16)
        params = fit_zero_mean(spike_histogram(-16, 16, 0), ranges)
        assert params.sigma == pytest.approx(SIGMA_MIN, rel=1e-9)
        assert quantize_params(params, ranges).indices == (0,)

    def test_refit_recovers_generating_sigma(self):
        ranges = ParamRanges.for_alphabet(-16, 16)
        step = (ranges.log_sigma_hi - ranges.log_sigma_lo) / (GRID_LEVELS - 1)
        params = fit_zero_mean(gaussian_histogram(2.0, -16, 16), ranges)
        assert abs(np.log(params.sigma) - np.log(2.0)) <= step * (1 + 1e-9)

    def test_uniform_histogram_prefers_flat_interior_model(self):
        # Tail folding piles boundary mass at high sigma, so the flattest
        # model over the alphabet is an interior level, not SIGMA_MAX.
        hist = ChannelHistogram(-16, 16, np.full(33, 100, dtype=np.int64))
        ranges = ParamRanges.for_alphabet(-16, 16)
        params = fit_zero_mean(hist, ranges)
        index = quantize_params(params, ranges).indices[0]
        assert params.sigma > 8.0
        assert index == int(np.argmin(zero_mean_grid_costs(hist)))

    def test_grid_exhaustive_optimality(self):
        rng = np.random.default_rng(16)
        for _ in range(25):
            lo = -int(rng.integers(1, 13))
            hi = int(rng.integers(1, 13))
            counts = rng.integers(0, 200, hi - lo + 1)
            if counts.sum() == 0:
                counts[0] = 1
            hist = ChannelHistogram(lo, hi, counts.astype(np.int64))
            ranges = ParamRanges.for_alphabet(lo, hi)
            got = quantize_params(fit_zero_mean(hist, ranges), ranges)
            assert got.indices == (int(np.argmin(zero_mean_grid_costs(hist))),)


class TestFitMixture:
    def test_point_mass_single_component(self):
        ranges = ParamRanges.for_alphabet(-16, 16)
        params = fit_mixture(spike_histogram(-16, 16, 0), 1, ranges)
        mean_step = 32.0 / (GRID_LEVELS - 1)
        assert abs(params.means[0]) <= mean_step
        assert params.sigmas[0] == pytest.approx(SIGMA_MIN, rel=1e-9)

    def test_two_components_split_a_bimodal_histogram(self):
        counts = np.zeros(33, dtype=np.int64)
        counts[16 - 4], counts[16 + 4] = 480, 520
        counts[16 - 5], counts[16 + 5] = 60, 55
        counts[16 - 3], counts[16 + 3] = 50, 62
        hist = ChannelHistogram(-16, 16, counts)
        ranges = ParamRanges.for_alphabet(-16, 16)
        params = fit_mixture(hist, 2, ranges)
        means = np.sort(params.means)
        assert abs(means[0] - (-4.0)) <= 0.2
        assert abs(means[1] - 4.0) <= 0.2
        assert np.all(np.abs(params.weights - 0.5) <= 0.05)

    def test_deterministic_given_histogram(self):
        rng = np.random.default_rng(18)
        counts = rng.integers(0, 300, 17).astype(np.int64)
        hist = ChannelHistogram(-8, 8, counts)
        ranges = ParamRanges.for_alphabet(-8, 8)
        for k in (1, 2, 3):
            a = fit_mixture(hist, k, ranges)
            b = fit_mixture(hist, k, ranges)
            assert np.array_equal(a.means, b.means)
            assert np.array_equal(a.sigmas, b.sigmas)
            assert np.array_equal(a.weights, b.weights)

    def test_fitted_model_never_beats_the_entropy_limit(self):
        rng = np.random.default_rng(19)
        for _ in range(15):
            lo = -int(rng.integers(2, 10))
            hi = int(rng.integers(2, 10))
            counts = rng.integers(0, 120, hi - lo + 1)
            if counts.sum() == 0:
                counts[2] = 5
            hist = ChannelHistogram(lo, hi, counts.astype(np.int64))
            ranges = ParamRanges.for_alphabet(lo, hi)
            occupied = hist.counts > 0
            freq = hist.counts[occupied] / hist.counts.sum()
            limit = -float(np.sum(hist.counts[occupied] * np.log2(freq)))
            for k in (1, 2):
                params = fit_mixture(hist, k, ranges)
                code = quantize_params(params, ranges)
                snapped = dequantize_params(code, ranges, k=k)
                pmf = reparam_pmf(snapped, lo, hi)
                bits = counts_bits(hist.counts, pmf.probs)
                assert limit <= bits * (1 + 1e-9)


class TestReparamPmf:
    def test_single_component_matches_gaussian_table(self):
        params = MixtureParams(
            np.array([0.0]), np.array([1.0]), np.array([1.0]), -16.0, 16.0
        )
        table = reparam_pmf(params, -16, 16)
        reference = gaussian_pmf(1.0, -16, 16)
        assert np.allclose(table.probs, reference.probs, rtol=0, atol=1e-12)

    def test_zero_mean_params_match_gaussian_table(self):
        table = reparam_pmf(ZeroMeanParams(1.7, -8.0, 8.0), -8, 8)
        reference = gaussian_pmf(1.7, -8, 8)
        assert np.allclose(table.probs, reference.probs, rtol=0, atol=1e-12)

    def test_balanced_two_component_mixture_is_symmetric(self):
        params = MixtureParams(
            np.array([-4.0, 4.0]),
            np.array([0.5, 0.5]),
            np.array([0.5, 0.5]),
            -16.0,
            16.0,
        )
        table = reparam_pmf(params, -16, 16)
        assert np.allclose(table.probs, table.probs[::-1], rtol=1e-12)

    def test_arbitrary_params_normalize(self):
        rng = np.random.default_rng(20)
        for _ in range(30):
            k = int(rng.integers(1, 4))
            means = rng.uniform(-6, 6, k)
            sigmas = np.exp(rng.uniform(np.log(SIGMA_MIN), np.log(8.0), k))
            weights = rng.random(k) + 0.05
            weights /= weights.sum()
            params = MixtureParams(means, sigmas, weights, -8.0, 8.0)
            table = reparam_pmf(params, -8, 8)
            assert float(np.sum(table.probs)) == pytest.approx(1.0, abs=1e-9)

    def test_truncation_must_match_alphabet(self):
        params = ZeroMeanParams(1.0, -8.0, 8.0)
        with pytest.raises(DomainError):
            reparam_pmf(params, -4, 4)


class TestCoderSideAgreement:
    def test_fixed_point_tables_identical_across_reconstructions(self):
        rng = np.random.default_rng(22)
        ranges = ParamRanges.for_alphabet(-10, 10)
        for _ in range(20):
            counts = rng.integers(0, 400, 21).astype(np.int64)
            if counts.sum() == 0:
                counts[10] = 1
            hist = ChannelHistogram(-10, 10, counts)
            k = int(rng.integers(1, 4))
            code = quantize_params(fit_mixture(hist, k, ranges), ranges)
            first = reparam_pmf(dequantize_params(code, ranges, k=k), -10, 10)
            second = reparam_pmf(dequantize_params(code, ranges, k=k), -10, 10)
            assert np.array_equal(first.probs, second.probs)
            assert np.array_equal(
                pmf_to_freq(first).freqs, pmf_to_freq(second).freqs
            )
