"""Deterministic stand-in for a low-rate scale-space-flow style codec.

Real exports need a pretrained checkpoint and video frames; this runtime
fabricates latents with the same structure so the export path and the
downstream analysis bands can be exercised anywhere. Its statistics are
shaped to a low-rate operating point: residual main latents dominate the
bit budget, motion streams stay cheap, and the learned tables sit
slightly wide of the data so recoding has a gap to find.

Everything derives from the checkpoint bytes and the frame files, so
re-exporting the same inputs is byte-identical. The reported rate is the
exact cross-entropy of the drawn symbols under the runtime's own tables,
which is what a codec's entropy model would report for its coder.
"""

import hashlib
from pathlib import Path

import numpy as np
from scipy.special import ndtr

from .errors import ContractError
from .manifest import ExportManifest
from .runtime import RawFrame, RawMain, StreamTables

CODEC_TAG = "ssf-sim"

RES_SIDE_SHAPE = (16, 25, 8)
RES_SIDE_ALPHABET = (-12, 12)
RES_MAIN_COUNT = 32000
RES_MAIN_ALPHABET = (-16, 16)
RES_SCALES = (0.4, 6.0, 8)  # log-spaced lo, hi, count

MOT_SIDE_SHAPE = (8, 13, 4)
MOT_SIDE_ALPHABET = (-8, 8)
MOT_MAIN_COUNT = 6000
MOT_MAIN_ALPHABET = (-10, 10)
MOT_SCALES = (0.3, 1.8, 4)

# The model tables sit wider than the data laws by these factors. The
# spread keeps the recoverable rate gap in the low single digits, with
# motion closer to matched than the residuals.
RES_MAIN_DRIFT = (1.18, 1.42)
RES_SIDE_DRIFT = (1.12, 1.35)
MOT_DRIFT = (1.02, 1.18)

# Geometric decay of scale-group occupancy; small scales dominate at low
# rate. Predicted scales sit up to this far below their snapped entry,
# which is well inside the log spacing of both scale sets.
SCALE_PICK_DECAY = 0.62
SCALE_JITTER = 0.25

# How many leading content bytes of each frame file feed its seed.
SEED_CONTENT_BYTES = 65536


def _cross_bits(counts, mass):
    """Prices observed counts under a mass table, bits, occupied bins only.

    Unoccupied bins may carry underflowed zero mass in the far tails; they
    contribute nothing to the rate and must not poison the sum.
    """
    hit = counts > 0
    return -float(np.dot(counts[hit], np.log2(mass[hit])))


def _folded_mass(mean, sigma, lo, hi):
    """Discretized Gaussian with open tails folded into the end symbols."""
    edges = np.arange(lo, hi + 1, dtype=np.float64)
    upper = ndtr((edges + 0.5 - mean) / sigma)
    lower = ndtr((edges - 0.5 - mean) / sigma)
    mass = upper - lower
    mass[0] = upper[0]
    mass[-1] = 1.0 - lower[-1]
    return mass


def _log_spaced(spec):
    lo, hi, count = spec
    return np.geomspace(lo, hi, count)


class _SideLaw:
    """Per-channel learned tables plus the laws the data actually follows."""

    def __init__(self, rng, shape, alphabet, drift):
        lo, hi = alphabet
        channels = shape[2]
        self.shape = shape
        self.lo = lo
        self.hi = hi
        self.model_means = rng.uniform(-1.0, 1.0, channels)
        self.model_sigmas = rng.uniform(0.8, 2.6, channels)
        self.data_means = self.model_means + rng.uniform(-0.3, 0.3, channels)
        self.data_sigmas = self.model_sigmas / rng.uniform(*drift, channels)
        self.tables = tuple(
            _folded_mass(m, s, lo, hi) for m, s in zip(self.model_means, self.model_sigmas)
        )

    def draw(self, rng):
        height, width, channels = self.shape
        planes = []
        bits = 0.0
        for c in range(channels):
            raw = rng.normal(self.data_means[c], self.data_sigmas[c], height * width)
            symbols = np.clip(np.rint(raw).astype(np.int64), self.lo, self.hi)
            counts = np.bincount(symbols - self.lo, minlength=self.hi - self.lo + 1)
            bits += _cross_bits(counts, self.tables[c])
            planes.append(symbols.reshape(height, width))
        return np.stack(planes, axis=2), bits


class _MainLaw:
    """Scale-set tables plus per-group occupancy and data drift."""

    def __init__(self, rng, count, alphabet, scale_spec, drift):
        lo, hi = alphabet
        self.count = count
        self.lo = lo
        self.hi = hi
        self.scales = _log_spaced(scale_spec)
        groups = self.scales.size
        pick = SCALE_PICK_DECAY ** np.arange(groups)
        self.pick = pick / pick.sum()
        self.data_sigmas = self.scales / rng.uniform(*drift, groups)
        self.masses = tuple(_folded_mass(0.0, s, lo, hi) for s in self.scales)

    def draw(self, rng):
        index = rng.choice(self.scales.size, size=self.count, p=self.pick)
        raw = rng.normal(0.0, self.data_sigmas[index])
        symbols = np.clip(np.rint(raw).astype(np.int64), self.lo, self.hi)
        bits = 0.0
        for g in range(self.scales.size):
            members = symbols[index == g]
            if members.size == 0:
                continue
            counts = np.bincount(members - self.lo, minlength=self.hi - self.lo + 1)
            bits += _cross_bits(counts, self.masses[g])
        # Predicted scales sit at or below the snapped entry, never at or
        # below the next one down, so the coder's assignment recovers the
        # group the rate was priced under.
        predicted = self.scales[index] * (1.0 - rng.uniform(0.0, SCALE_JITTER, self.count))
        means = rng.normal(0.0, 1.1, self.count)
        values = symbols + means
        return RawMain(values, means, predicted), bits


class SimulatedScaleSpaceRuntime:
    """Checkpoint-seeded fake codec with the export runtime surface."""

    codec_tag = CODEC_TAG

    def __init__(self, checkpoint_path):
        digest = hashlib.sha256(Path(checkpoint_path).read_bytes()).digest()
        self.checkpoint_id = digest[:8].hex()
        self._root = int.from_bytes(digest[8:16], "big")
        rng = np.random.default_rng(np.random.SeedSequence([self._root, 0]))
        self._res_side = _SideLaw(rng, RES_SIDE_SHAPE, RES_SIDE_ALPHABET, RES_SIDE_DRIFT)
        self._res_main = _MainLaw(rng, RES_MAIN_COUNT, RES_MAIN_ALPHABET, RES_SCALES, RES_MAIN_DRIFT)
        self._mot_side = _SideLaw(rng, MOT_SIDE_SHAPE, MOT_SIDE_ALPHABET, MOT_DRIFT)
        self._mot_main = _MainLaw(rng, MOT_MAIN_COUNT, MOT_MAIN_ALPHABET, MOT_SCALES, MOT_DRIFT)
        self._reported_bits = None

    def entropy_tables(self):
        residual = StreamTables(
            self._res_side.tables,
            self._res_side.lo,
            self._res_side.hi,
            self._res_main.lo,
            self._res_main.hi,
            self._res_main.scales,
        )
        motion = StreamTables(
            self._mot_side.tables,
            self._mot_side.lo,
            self._mot_side.hi,
            self._mot_main.lo,
            self._mot_main.hi,
            self._mot_main.scales,
        )
        return residual, motion

    def code_frames(self, video_frames):
        paths = [Path(p) for p in video_frames]
        if not paths:
            raise ContractError("code_frames needs at least one frame file")
        frames = []
        total_bits = 0.0
        for index, path in enumerate(paths):
            token = hashlib.sha256(
                path.name.encode() + b"\0" + path.read_bytes()[:SEED_CONTENT_BYTES]
            ).digest()
            rng = np.random.default_rng(
                np.random.SeedSequence([self._root, 1, index, int.from_bytes(token[:8], "big")])
            )
            side, side_bits = self._res_side.draw(rng)
            main, main_bits = self._res_main.draw(rng)
            total_bits += side_bits + main_bits
            if index == 0:
                frames.append(RawFrame("I", side, main))
                continue
            mot_side, mot_side_bits = self._mot_side.draw(rng)
            mot_main, mot_main_bits = self._mot_main.draw(rng)
            total_bits += mot_side_bits + mot_main_bits
            frames.append(RawFrame("P", side, main, mot_side, mot_main))
        self._reported_bits = total_bits
        return frames

    def reported_rate_bits(self):
        if self._reported_bits is None:
            raise ContractError("rate is reported after code_frames, not before")
        return self._reported_bits

    def default_manifest(self, video_frames):
        return ExportManifest.p_chain(self.codec_tag, self.checkpoint_id, len(video_frames))
