"""Tests for symbol tensors, histograms, and discretized Gaussian tables."""

import numpy as np
import pytest

from nvlcodec.errors import (
    AlphabetError,
    DomainError,
    EmptyGroupError,
    ShapeError,
)
from nvlcodec.latents import (
    PMF_FLOOR,
    ChannelHistogram,
    GaussianLatentSet,
    PmfTable,
    ScaleSet,
    SymbolTensor,
    build_channel_histogram,
    build_group_histogram,
    center_and_assign,
    gaussian_pmf,
    round_half_away,
)


def test_round_half_away_ties_move_away_from_zero():
    values = np.array([0.5, -0.5, 1.5, -1.5, 2.4, -2.4, 0.0])
    out = round_half_away(values)
    assert out.tolist() == [1, -1, 2, -2, 2, -2, 0]
    assert out.dtype == np.int64


class TestPmfTable:
    def test_valid_table_round_trips_probabilities(self):
        probs = np.array([0.25, 0.5, 0.25])
        table = PmfTable(-1, 1, probs)
        assert table.size == 3
        assert table.prob(-1) == 0.25
        assert table.prob(0) == 0.5
        assert table.prob(1) == 0.25

    def test_prob_outside_alphabet_rejected(self):
        table = PmfTable(-1, 1, np.array([0.25, 0.5, 0.25]))
        with pytest.raises(AlphabetError):
            table.prob(2)

    def test_length_mismatch_rejected(self):
        with pytest.raises(ShapeError):
            PmfTable(-1, 1, np.array([0.5, 0.5]))

    def test_unnormalized_rejected(self):
        with pytest.raises(DomainError):
            PmfTable(-1, 1, np.array([0.25, 0.5, 0.3]))

    def test_below_floor_rejected(self):
        probs = np.array([PMF_FLOOR / 2, 0.5, 0.5 - PMF_FLOOR / 2])
        with pytest.raises(DomainError):
            PmfTable(-1, 1, probs)

    def test_entropy_of_uniform_table(self):
        table = PmfTable(0, 3, np.full(4, 0.25))
        assert table.entropy_bits() == pytest.approx(2.0, abs=1e-12)


class TestGaussianPmf:
    def test_unit_sigma_center_mass(self):
        # Interior mass of N(0,1) on [-.5, .5] is 0.3829249...; flooring
        # shaves it to 0.3829169029421164 on a 33-symbol alphabet.
        table = gaussian_pmf(1.0, -16, 16)
        assert table.prob(0) == pytest.approx(0.382925, abs=1e-5)

    def test_tiny_sigma_concentrates_up_to_floor(self):
        # Every non-center symbol is pinned at the floor, so the center
        # holds all remaining mass: 1 - 32 * 2**-20 on a 33-symbol alphabet.
        table = gaussian_pmf(0.01, -16, 16)
        reserve = (table.size - 1) * PMF_FLOOR
        assert table.prob(0) >= 1.0 - reserve - 1e-12
        others = np.delete(table.probs, 16)
        assert np.allclose(others, PMF_FLOOR, rtol=1e-6)

    def test_tail_folding_preserves_normalization(self):
        table = gaussian_pmf(1.0, -1, 1)
        assert float(np.sum(table.probs)) == pytest.approx(1.0, abs=1e-12)

    def test_nonpositive_sigma_rejected(self):
        with pytest.raises(DomainError):
            gaussian_pmf(0.0, -4, 4)
        with pytest.raises(DomainError):
            gaussian_pmf(-1.0, -4, 4)

    def test_symmetric_alphabet_gives_symmetric_table(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            sigma = float(np.exp(rng.uniform(np.log(0.05), np.log(8.0))))
            table = gaussian_pmf(sigma, -9, 9)
            assert np.allclose(table.probs, table.probs[::-1], rtol=1e-12)

    def test_center_mass_strictly_decreases_with_sigma(self):
        sigmas = np.exp(np.linspace(np.log(0.3), np.log(8.0), 12))
        masses = [gaussian_pmf(float(s), -16, 16).prob(0) for s in sigmas]
        assert all(a > b for a, b in zip(masses, masses[1:]))

    def test_every_table_sums_to_one_and_respects_floor(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            sigma = float(np.exp(rng.uniform(np.log(0.01), np.log(64.0))))
            lo = int(rng.integers(-20, 0))
            hi = int(rng.integers(1, 21))
            table = gaussian_pmf(sigma, lo, hi)
            assert float(np.sum(table.probs)) == pytest.approx(1.0, abs=1e-9)
            assert float(np.min(table.probs)) >= PMF_FLOOR * (1 - 1e-12)


class TestSymbolTensor:
    def test_accepts_three_dim_integer_block(self):
        symbols = np.zeros((4, 5, 3), dtype=np.int16)
        tensor = SymbolTensor(symbols, -2, 2)
        assert tensor.channel_count == 3
        assert tensor.channel(1).shape == (4, 5)

    def test_rejects_wrong_rank(self):
        with pytest.raises(ShapeError):
            SymbolTensor(np.zeros((4, 5), dtype=np.int64), -2, 2)

    def test_rejects_float_dtype(self):
        with pytest.raises(ShapeError):
            SymbolTensor(np.zeros((2, 2, 1)), -2, 2)

    def test_rejects_symbols_outside_alphabet(self):
        symbols = np.full((2, 2, 1), 3, dtype=np.int64)
        with pytest.raises(AlphabetError):
            SymbolTensor(symbols, -2, 2)

    def test_alphabet_must_contain_zero(self):
        symbols = np.full((2, 2, 1), 4, dtype=np.int64)
        with pytest.raises(AlphabetError):
            SymbolTensor(symbols, 3, 5)


class TestScaleSet:
    def test_strictly_increasing_positive_scales(self):
        scales = ScaleSet(np.array([0.5, 1.0, 2.0]))
        assert scales.size == 3

    def test_rejects_duplicates(self):
        with pytest.raises(DomainError):
            ScaleSet(np.array([0.5, 0.5, 2.0]))

    def test_rejects_nonpositive(self):
        with pytest.raises(DomainError):
            ScaleSet(np.array([0.0, 1.0]))

    def test_rejects_empty(self):
        with pytest.raises(ShapeError):
            ScaleSet(np.array([]))


class TestGaussianLatentSet:
    def test_valid_set(self):
        latents = GaussianLatentSet(
            np.array([0, 1, -1]), np.array([0, 1, 0]), -4, 4
        )
        assert latents.size == 3

    def test_rejects_length_mismatch(self):
        with pytest.raises(ShapeError):
            GaussianLatentSet(np.array([0, 1]), np.array([0]), -4, 4)

    def test_rejects_negative_scale_index(self):
        with pytest.raises(DomainError):
            GaussianLatentSet(np.array([0]), np.array([-1]), -4, 4)


class TestHistograms:
    def test_counts_direct_example(self):
        symbols = np.array([[0, 0], [1, 1]], dtype=np.int64).reshape(2, 2, 1)
        tensor = SymbolTensor(symbols, -1, 1)
        hist = build_channel_histogram(tensor, 0)
        assert hist.counts.tolist() == [0, 2, 2]
        assert int(np.sum(hist.counts)) == 4

    def test_totals_match_slice_size_and_sum_over_channels(self):
        rng = np.random.default_rng(7)
        symbols = rng.integers(-5, 6, size=(9, 13, 4))
        tensor = SymbolTensor(symbols, -5, 5)
        total = 0
        for c in range(4):
            hist = build_channel_histogram(tensor, c)
            assert int(np.sum(hist.counts)) == 9 * 13
            total += int(np.sum(hist.counts))
        assert total == symbols.size

    def test_large_uniform_slice_has_flat_frequencies(self):
        rng = np.random.default_rng(123)
        symbols = rng.integers(-7, 8, size=(256, 256, 1))
        tensor = SymbolTensor(symbols, -7, 7)
        freq = build_channel_histogram(tensor, 0).normalized()
        assert np.all(np.abs(freq - 1.0 / 15.0) < 0.01)

    def test_group_histogram_counts_members(self):
        latents = GaussianLatentSet(
            np.array([0, 1, 0]), np.array([1, 2, 1]), -2, 2
        )
        hist = build_group_histogram(latents, 1)
        assert hist.counts.tolist() == [0, 0, 2, 0, 0]
        assert int(np.sum(hist.counts)) == 2

    def test_empty_group_raises(self):
        latents = GaussianLatentSet(
            np.array([0, 1, 0]), np.array([1, 2, 1]), -2, 2
        )
        with pytest.raises(EmptyGroupError):
            build_group_histogram(latents, 3)

    def test_round_robin_assignment_splits_evenly(self):
        n = 100_000
        latents = GaussianLatentSet(
            np.zeros(n, dtype=np.int64), np.arange(n) % 4, -1, 1
        )
        for scale_index in range(4):
            hist = build_group_histogram(latents, scale_index)
            assert int(np.sum(hist.counts)) == 25_000

    def test_zero_total_rejected(self):
        with pytest.raises(DomainError):
            ChannelHistogram(-1, 1, np.zeros(3, dtype=np.int64))


class TestCenterAndAssign:
    def test_residual_rounding(self):
        scales = ScaleSet(np.array([0.5, 1.0, 2.0]))
        latents = center_and_assign(
            np.array([3.6]), np.array([3.0]), np.array([0.9]), scales, -16, 16
        )
        assert latents.symbols.tolist() == [1]

    def test_scale_assignment_takes_smallest_cover(self):
        scales = ScaleSet(np.array([0.5, 1.0, 2.0]))
        latents = center_and_assign(
            np.array([0.0]), np.array([0.0]), np.array([0.9]), scales, -16, 16
        )
        assert latents.scale_index.tolist() == [1]

    def test_predicted_scale_above_table_clamps_to_largest(self):
        scales = ScaleSet(np.array([0.5, 1.0, 2.0]))
        latents = center_and_assign(
            np.array([0.0]), np.array([0.0]), np.array([5.0]), scales, -16, 16
        )
        assert latents.scale_index.tolist() == [2]

    def test_huge_residual_clamps_to_alphabet(self):
        scales = ScaleSet(np.array([1.0]))
        latents = center_and_assign(
            np.array([100.0]), np.array([0.0]), np.array([1.0]), scales, -16, 16
        )
        assert latents.symbols.tolist() == [16]

    def test_length_mismatch_rejected(self):
        scales = ScaleSet(np.array([1.0]))
        with pytest.raises(ShapeError):
            center_and_assign(
                np.array([1.0, 2.0]),
                np.array([0.0]),
                np.array([1.0]),
                scales,
                -16,
                16,
            )
