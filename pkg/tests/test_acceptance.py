"""Acceptance gate for the toolkit's contract.

Each test covers one shipped guarantee, states its tolerance inline, and
prints a single PASS/FAIL verdict line (visible under pytest -s; the test
outcome itself mirrors the verdict).
"""

import math
import time

import numpy as np
import pytest
from scipy.special import ndtr

from test_codec import random_container
from test_reparam import zero_mean_grid_costs

from nvlcodec import accounting
from nvlcodec.bitio import BitReader
from nvlcodec.cli import EXIT_OK, main
from nvlcodec.codec import decode_sequence, encode_sequence
from nvlcodec.latents import (
    ChannelHistogram,
    GaussianLatentSet,
    PMF_FLOOR,
    PmfTable,
    ScaleSet,
    SymbolTensor,
    floor_and_normalize,
    gaussian_pmf,
)
from nvlcodec.rangecoder import TOTAL, pmf_to_freq, range_encode
from nvlcodec.reparam import (
    GRID_LEVELS,
    ParamRanges,
    QuantizedParamCode,
    fit_mixture,
    fit_zero_mean,
    quantize_params,
    quantize_value,
    reparam_pmf,
)
from nvlcodec.selector import (
    KEEP_LEARNED,
    REPLACE_NEW,
    REUSE_TEMPORAL,
    TemporalState,
    decode_decisions,
    encode_factorized_frame,
)
from nvlcodec.synth import drifted_sigma_preset, generate_container

FUZZ_CONTAINERS = 10_000
FUZZ_TIME_LIMIT_S = 300.0


def verdict(name, ok, detail):
    print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    assert ok, f"{name}: {detail}"


@pytest.fixture(scope="module")
def fuzz_corpus():
    """Encodes and decodes the full fuzz corpus once; both the round-trip
    and the overhead criteria read from the same pass."""
    rng = np.random.default_rng(4242)
    mismatches = 0
    overhead_violations = 0
    frames_checked = 0
    start = time.monotonic()
    for trial in range(FUZZ_CONTAINERS):
        container = random_container(rng, degenerate=trial % 20 == 19)
        k = int(rng.choice([1, 2, 3]))
        s = int(rng.choice([0, 4, 8]))
        bitstream, stats = encode_sequence(container, k=k, s_factorized=s, s_hyper=s)
        if decode_sequence(bitstream, container, k=k) != container:
            mismatches += 1
        for frame in stats.frames:
            frames_checked += 1
            bound = frame.baseline_bits + 2 * s + 2 * s + 32 * len(frame.streams)
            if frame.achieved_bits > bound:
                overhead_violations += 1
    elapsed = time.monotonic() - start
    return {
        "mismatches": mismatches,
        "overhead_violations": overhead_violations,
        "frames": frames_checked,
        "elapsed": elapsed,
    }


def test_lossless_round_trip_fuzz(fuzz_corpus):
    """Tolerance: exact container equality, all containers, under 300 s."""
    ok = (
        fuzz_corpus["mismatches"] == 0
        and fuzz_corpus["elapsed"] < FUZZ_TIME_LIMIT_S
    )
    verdict(
        "lossless-round-trip-fuzz",
        ok,
        f"{FUZZ_CONTAINERS - fuzz_corpus['mismatches']}/{FUZZ_CONTAINERS} "
        f"containers decoded identical in {fuzz_corpus['elapsed']:.1f}s "
        f"(limit {FUZZ_TIME_LIMIT_S:.0f}s)",
    )


def test_pricing_inequality():
    """The empirical entropy floor never exceeds the learned-table cross
    entropy. Tolerance: relative slack 1e-9, zero violations over 1000+
    randomized channels and scale groups."""
    rng = np.random.default_rng(555)
    checked = 0
    violations = 0

    def scan(expected, limit):
        nonlocal checked, violations
        for e, l in zip(expected.per_channel_bits, limit.per_channel_bits):
            checked += 1
            if l > e * (1.0 + accounting.GIBBS_RTOL):
                violations += 1

    for trial in range(150):
        hi = int(rng.integers(1, 9))
        lo = -int(rng.integers(1, 9))
        h, w = int(rng.integers(2, 9)), int(rng.integers(2, 9))
        symbols = np.empty((h, w, 4), dtype=np.int64)
        pmfs = []
        for c in range(4):
            if trial % 3 == 0:
                weights = rng.random(hi - lo + 1) ** 2
                pmfs.append(PmfTable(lo, hi, floor_and_normalize(weights / weights.sum())))
            else:
                pmfs.append(gaussian_pmf(float(rng.uniform(0.2, 5.0)), lo, hi))
            if c % 2:
                symbols[:, :, c] = rng.integers(lo, hi + 1, (h, w))
            else:
                symbols[:, :, c] = np.clip(
                    np.round(rng.normal(rng.uniform(lo, hi), rng.uniform(0.3, 3.0), (h, w))),
                    lo, hi,
                )
        tensor = SymbolTensor(symbols, lo, hi)
        scan(
            accounting.expected_bits_factorized(tensor, pmfs),
            accounting.limit_bits_factorized(tensor),
        )

    for _ in range(100):
        hi = int(rng.integers(2, 13))
        scales = ScaleSet(np.sort(rng.uniform(0.2, 6.0, 5)))
        n = int(rng.integers(0, 400))
        idx = rng.integers(0, 5, n)
        sym = np.clip(
            np.round(rng.normal(0, scales.scales[idx] * rng.uniform(0.3, 3.0))),
            -hi, hi,
        ).astype(np.int64)
        latents = GaussianLatentSet(sym, idx, -hi, hi)
        scan(
            accounting.expected_bits_hyper(latents, scales),
            accounting.limit_bits_hyper(latents, scales),
        )

    ok = checked >= 1000 and violations == 0
    verdict(
        "pricing-inequality",
        ok,
        f"{checked} channels and scale groups, {violations} violations "
        f"(rtol {accounting.GIBBS_RTOL})",
    )


def test_selection_overhead_bound(fuzz_corpus):
    """Tolerance: per frame, achieved <= baseline + 2*S_f + 2*S_h + 32 bits
    of flush slack per stream; zero violations over the fuzz corpus."""
    ok = fuzz_corpus["overhead_violations"] == 0
    verdict(
        "selection-overhead-bound",
        ok,
        f"{fuzz_corpus['frames']} frames checked, "
        f"{fuzz_corpus['overhead_violations']} violations",
    )


def test_coder_tightness():
    """Tolerance: coded length <= fixed-point ideal + 32 bits + 0.001
    bits/symbol, and within 0.5% of the floating-point estimate on streams
    of 20000 symbols."""
    rng = np.random.default_rng(909)
    n = 20_000
    worst_slack = -np.inf
    worst_rel = 0.0

    def random_table(size):
        weights = rng.random(size) ** 2 + 1e-3
        return PmfTable(0, size - 1, floor_and_normalize(weights / weights.sum()))

    cases = []
    for size in (3, 8, 33, 128, 200, 5, 17, 64, 9, 41):
        table = random_table(size)
        symbols = rng.choice(np.arange(size), size=n, p=table.probs)
        cases.append(([table] * n, symbols.astype(np.int64)))
    mixed = [random_table(int(rng.integers(4, 40))) for _ in range(3)]
    mixed_symbols = np.empty(n, dtype=np.int64)
    for i, table in enumerate(mixed):
        lane = np.arange(i, n, 3)
        mixed_symbols[lane] = rng.choice(
            np.arange(table.size), size=lane.size, p=table.probs
        )
    cases.append(([mixed[i % 3] for i in range(n)], mixed_symbols))

    for pmf_schedule, symbols in cases:
        freq_of = {}
        for t in pmf_schedule:
            if id(t) not in freq_of:
                freq_of[id(t)] = pmf_to_freq(t)
        stream = range_encode(symbols, [freq_of[id(t)] for t in pmf_schedule])
        coded = len(stream.data) * 8
        ideal = estimate = 0.0
        for i, sym in enumerate(symbols):
            table = pmf_schedule[i]
            freq = freq_of[id(table)]
            ideal -= math.log2(freq.freqs[sym - table.alphabet_lo] / TOTAL)
            estimate -= math.log2(table.probs[sym - table.alphabet_lo])
        slack = coded - (ideal + 32 + 0.001 * n)
        worst_slack = max(worst_slack, slack)
        worst_rel = max(worst_rel, abs(coded - estimate) / estimate)
        assert slack <= 0.0
        assert abs(coded - estimate) <= 0.005 * estimate

    verdict(
        "coder-tightness",
        True,
        f"{len(cases)} streams of {n} symbols, worst fixed-point slack "
        f"{worst_slack:.1f} bits under the bound, worst estimate deviation "
        f"{100.0 * worst_rel:.3f}% (limit 0.5%)",
    )


def random_histogram(rng, trial):
    hi = int(rng.integers(2, 17))
    lo = -int(rng.integers(2, 17))
    size = hi - lo + 1
    kind = trial % 4
    if kind == 0:
        counts = np.maximum(
            np.round(
                rng.uniform(50, 5000)
                * np.exp(-0.5 * (np.arange(lo, hi + 1) / rng.uniform(0.2, 6.0)) ** 2)
            ),
            0,
        )
    elif kind == 1:
        counts = rng.integers(0, 200, size)
    elif kind == 2:
        counts = np.zeros(size)
        counts[rng.integers(0, size)] = int(rng.integers(1, 2000))
    else:
        counts = rng.integers(0, 30, size) ** 2
    counts = counts.astype(np.int64)
    if counts.sum() == 0:
        counts[0] = 1
    return ChannelHistogram(lo, hi, counts)


def k1_grid_oracle(hist, ranges):
    """Exhaustive grid search over all 1024x1024 quantized (mean, sigma)
    pairs, pricing each pmf exactly as the production pipeline does."""
    lo, hi = hist.alphabet_lo, hist.alphabet_hi
    values = np.arange(lo, hi + 1, dtype=np.float64)
    grid = np.arange(GRID_LEVELS, dtype=np.float64) / (GRID_LEVELS - 1)
    means = ranges.mean_lo + grid * (ranges.mean_hi - ranges.mean_lo)
    sigmas = np.exp(
        ranges.log_sigma_lo + grid * (ranges.log_sigma_hi - ranges.log_sigma_lo)
    )
    nz = np.flatnonzero(hist.counts > 0)
    counts = hist.counts[nz].astype(np.float64)
    n = values.size
    floor_total = n * PMF_FLOOR
    best = np.inf
    for sigma in sigmas:
        up = ndtr((values[None, :] + 0.5 - means[:, None]) / sigma)
        down = ndtr((values[None, :] - 0.5 - means[:, None]) / sigma)
        mass = up - down
        mass[:, 0] = up[:, 0]
        mass[:, -1] = 1.0 - down[:, -1]
        clipped = np.maximum(mass, PMF_FLOOR)
        excess = clipped.sum(axis=1) - floor_total
        probs = PMF_FLOOR + (clipped - PMF_FLOOR) * (
            (1.0 - floor_total) / excess
        )[:, None]
        bits = -(np.log2(probs[:, nz]) @ counts)
        best = min(best, float(bits.min()))
    return best


def test_fit_optimality():
    """Tolerance: the zero-mean fit matches the exhaustive 1024-level grid
    argmin exactly on 100 histograms; the one-component mixture fit prices
    within 1e-6 bits of the exhaustive 1024x1024 grid optimum on 20."""
    rng = np.random.default_rng(717)
    exact = 0
    for trial in range(100):
        hist = random_histogram(rng, trial)
        ranges = ParamRanges.for_alphabet(hist.alphabet_lo, hist.alphabet_hi)
        params = fit_zero_mean(hist, ranges)
        got = quantize_value(
            math.log(params.sigma), ranges.log_sigma_lo, ranges.log_sigma_hi
        )
        if got == int(np.argmin(zero_mean_grid_costs(hist))):
            exact += 1

    oracle_rng = np.random.default_rng(11)
    within = 0
    worst = -np.inf
    for _ in range(20):
        lo = int(oracle_rng.integers(-8, -1))
        hi = int(oracle_rng.integers(1, 9))
        n = int(oracle_rng.integers(20, 3000))
        vals = np.clip(
            np.round(
                oracle_rng.normal(
                    oracle_rng.uniform(-3, 3), oracle_rng.uniform(0.2, 5), n
                )
            ),
            lo, hi,
        )
        counts = np.bincount(vals.astype(np.int64) - lo, minlength=hi - lo + 1)
        hist = ChannelHistogram(lo, hi, counts)
        ranges = ParamRanges.for_alphabet(lo, hi)
        params = fit_mixture(hist, 1, ranges)
        pmf = reparam_pmf(params, lo, hi)
        nz = hist.counts > 0
        got = float(-np.dot(hist.counts[nz], np.log2(pmf.probs[nz])))
        oracle = k1_grid_oracle(hist, ranges)
        worst = max(worst, got - oracle)
        if got <= oracle + 1e-6:
            within += 1
    ok = exact == 100 and within == 20
    verdict(
        "fit-optimality",
        ok,
        f"zero-mean exact on {exact}/100 histograms; one-component fit "
        f"within 1e-6 bits of the grid optimum on {within}/20 "
        f"(worst excess {worst:.2e} bits)",
    )


def test_constructed_mismatch_saving(tmp_path, capsys):
    """Tolerance: the encode command must report saving >= 2% on the
    drifted-sigma preset."""
    nvl = tmp_path / "drifted.nvl"
    nvb = tmp_path / "drifted.nvb"
    assert main(["synth", "--output", str(nvl), "--preset", "drifted-sigma"]) == EXIT_OK
    assert main(["encode", "--input", str(nvl), "--output", str(nvb)]) == EXIT_OK
    out = capsys.readouterr().out
    saving_lines = [l for l in out.splitlines() if l.startswith("saving:")]
    assert len(saving_lines) == 1
    saving = float(saving_lines[0].split()[1].rstrip("%"))
    verdict(
        "constructed-mismatch-saving",
        saving >= 2.0,
        f"encode command reported saving {saving:.1f}% (required >= 2%)",
    )


def test_temporal_parameter_reuse():
    """Tolerance: with zero temporal drift, every frame after the second
    emits exactly 0 parameter-payload bits while reusing slots."""
    container = generate_container(drifted_sigma_preset())
    _, stats = encode_sequence(container)
    first_inter = stats.frames[1]
    assert sum(s.param_bits for _, s in first_inter.streams) > 0
    tail_param_bits = 0
    reused = 0
    for frame in stats.frames[2:]:
        tail_param_bits += sum(s.param_bits for _, s in frame.streams)
        reused += sum(s.reused for _, s in frame.streams)
        assert frame.residual_main.reused >= 1
    ok = tail_param_bits == 0 and reused > 0
    verdict(
        "temporal-parameter-reuse",
        ok,
        f"frames 3..{len(stats.frames)} carry {tail_param_bits} parameter "
        f"bits (required 0) with {reused} slot reuses",
    )


def test_selection_branch_table():
    """Tolerance: byte-exact parameter bitstream. One four-channel frame
    drives each selection branch once; the mask and payload bits are
    compared against a bit string assembled by hand."""
    pmfs = [gaussian_pmf(s, -8, 8) for s in (6.0, 4.0, 2.5, 1.2)]
    # Channel 0 matches its learned table (fresh slot, small gain); channels
    # 1 and 2 are constant zero against wide tables (huge gain; channel 1's
    # slot already holds the refit, channel 2's is fresh); channel 3 matches
    # its table but its slot holds a stale code.
    ch0 = [1, -1, 4, 1, -3, 2, 8, 6, -4, -8, -4, 0, -8, -1, -7, -4]
    ch3 = [0, 0, 1, 0, -1, 0, 2, 1, -1, -2, -1, 0, -3, 0, -1, -1]
    symbols = np.stack(
        [
            np.array(ch0).reshape(4, 4),
            np.zeros((4, 4), dtype=np.int64),
            np.zeros((4, 4), dtype=np.int64),
            np.array(ch3).reshape(4, 4),
        ],
        axis=-1,
    )
    tensor = SymbolTensor(symbols, -8, 8)
    state = TemporalState(
        (None, QuantizedParamCode((512, 0)), None, QuantizedParamCode((3, 4)))
    )

    decisions, writer, new_state = encode_factorized_frame(tensor, pmfs, 4, 1, state)
    kinds = [d.kind for d in decisions]
    assert kinds == [REUSE_TEMPORAL, REUSE_TEMPORAL, REPLACE_NEW, KEEP_LEARNED]
    assert decisions[1].gain > 20.0 and decisions[1].code is None
    assert decisions[2].code.indices == (512, 0)
    assert 0.0 < decisions[3].gain <= 20.0
    assert new_state.slots == (
        None,
        QuantizedParamCode((512, 0)),
        QuantizedParamCode((512, 0)),
        None,
    )

    # reuse(1) | reuse(1) | replace(0,1) + mean 512 + log-sigma 0 | keep(0,0)
    hand_bits = "1" + "1" + "01" + format(512, "010b") + format(0, "010b") + "00"
    assert len(hand_bits) == 26
    hand_bytes = int(hand_bits.ljust(32, "0"), 2).to_bytes(4, "big")
    ok = writer.bit_length == 26 and writer.getvalue() == hand_bytes

    tables, dec_state = decode_decisions(
        BitReader(writer.getvalue(), writer.bit_length), pmfs, 4, 1, state
    )
    assert dec_state == new_state
    for table, decision in zip(tables, decisions):
        assert np.array_equal(table.probs, decision.pmf.probs)

    verdict(
        "selection-branch-table",
        ok,
        f"four branches in one frame, parameter bits "
        f"{writer.getvalue().hex()} == hand string {hand_bits} "
        f"({writer.bit_length} bits)",
    )
