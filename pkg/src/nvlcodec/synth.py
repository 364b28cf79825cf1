"""Synthetic latent containers with controllable model mismatch.

The generator fills a latent container the way a deployed codec would: the
stream models describe a training-time distribution, while frame latents
are sampled from a test-time distribution that can differ from it. Two
knobs control the mismatch per stream kind: a sigma ratio (model sigma
divided by true sigma, so 2.0 means the model expects twice the spread
that the data has) and an additive mean shift on side channels. A third
knob controls temporal drift: the fraction of latent elements redrawn on
each successive frame that carries the stream. Drift 0 repeats the first
frame's latents exactly; drift 1 samples every frame independently.

Everything is deterministic under the config seed.
"""

from dataclasses import dataclass

import numpy as np

from .container import LatentContainer, LatentFrame, StreamModel
from .errors import ConfigError
from .latents import GaussianLatentSet, ScaleSet, SymbolTensor, gaussian_pmf, round_half_away

# Frame-kind cycles for the preset group-of-pictures layouts. The leading I
# frame is fixed; the cycle repeats after it.
GOP_PRESETS = {
    "p-chain": "P",
    "hier-b": "BBBP",
    "mixed": "PBB",
}


def frame_kinds(gop, frames):
    """Expands a GOP preset name or an explicit I/P/B pattern to kinds.

    Presets emit an I frame followed by their repeating inter cycle. An
    explicit pattern is itself treated as the repeating cycle, tiled or
    truncated to the requested frame count.
    """
    if frames < 1:
        raise ConfigError(f"frame count must be at least 1, got {frames}")
    if gop in GOP_PRESETS:
        cycle = GOP_PRESETS[gop]
        pattern = "I" + cycle * ((frames - 1) // len(cycle) + 1)
    else:
        if not gop or set(gop) - set("IPB"):
            raise ConfigError(
                f"gop must be a preset {sorted(GOP_PRESETS)} or an I/P/B pattern, got {gop!r}"
            )
        pattern = gop * ((frames - 1) // len(gop) + 1)
    return tuple(pattern[:frames])


@dataclass(frozen=True)
class SynthConfig:
    """Shape, model, and mismatch settings for one synthetic sequence."""

    gop: str = "p-chain"
    frames: int = 16
    channels: int = 8
    side_height: int = 16
    side_width: int = 16
    main_symbols: int = 4096
    scale_count: int = 8
    side_alphabet: int = 12
    main_alphabet: int = 16
    sigma_ratio_side: float = 1.0
    sigma_ratio_main: float = 1.0
    mean_shift_side: float = 0.0
    temporal_drift: float = 1.0
    motion: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.channels < 1:
            raise ConfigError(f"need at least one channel, got {self.channels}")
        if self.side_height < 1 or self.side_width < 1:
            raise ConfigError(
                f"side shape must be positive, got {self.side_height}x{self.side_width}"
            )
        if self.main_symbols < 0:
            raise ConfigError(f"main symbol count must be non-negative, got {self.main_symbols}")
        if self.scale_count < 1:
            raise ConfigError(f"need at least one scale, got {self.scale_count}")
        if self.side_alphabet < 0 or self.main_alphabet < 0:
            raise ConfigError("alphabet half-widths must be non-negative")
        if not self.sigma_ratio_side > 0.0 or not self.sigma_ratio_main > 0.0:
            raise ConfigError("sigma ratios must be positive")
        if not np.isfinite(self.mean_shift_side):
            raise ConfigError("mean shift must be finite")
        if not 0.0 <= self.temporal_drift <= 1.0:
            raise ConfigError(f"temporal drift must be in [0, 1], got {self.temporal_drift}")
        frame_kinds(self.gop, self.frames)


def drifted_sigma_preset(seed=0):
    """16-frame P chain whose main latents have half the model's sigma."""
    return SynthConfig(
        gop="p-chain",
        frames=16,
        main_symbols=100_000,
        sigma_ratio_main=2.0,
        temporal_drift=0.0,
        seed=seed,
    )


def matched_preset(seed=0, frames=2):
    """Latents drawn from the training distribution itself; gaps are noise."""
    return SynthConfig(
        gop="p-chain",
        frames=frames,
        side_height=100,
        side_width=100,
        main_symbols=100_000,
        seed=seed,
    )


def _snap(values, half_width):
    clipped = np.clip(round_half_away(values), -half_width, half_width)
    return clipped.astype(np.int16)


def _drift_values(rng, prev, true_sigma, mean, drift):
    # prev is None on the stream's first frame; afterwards each element
    # keeps its value or is redrawn from its own true law.
    if prev is None:
        return rng.normal(mean, true_sigma)
    if drift == 0.0:
        return prev
    values = prev.copy()
    redraw = rng.random(values.shape) < drift
    sigma = np.broadcast_to(true_sigma, values.shape)[redraw]
    mu = np.broadcast_to(mean, values.shape)[redraw]
    values[redraw] = rng.normal(mu, sigma)
    return values


class _ModelSynth:
    """One stream model plus drifting samplers for its side and main latents."""

    def __init__(self, config, rng):
        self.config = config
        self.rng = rng
        self.side_sigmas = np.exp(rng.uniform(np.log(0.5), np.log(3.0), config.channels))
        scales = np.sort(np.exp(rng.uniform(np.log(0.4), np.log(4.0), config.scale_count)))
        # Strictly increasing scales; nudge apart any duplicates.
        for i in range(1, scales.size):
            if scales[i] <= scales[i - 1]:
                scales[i] = np.nextafter(scales[i - 1], np.inf)
        self.scale_set = ScaleSet(scales)
        self.scale_index = rng.integers(
            0, config.scale_count, config.main_symbols
        ).astype(np.int64)
        self.prev_side = None
        self.prev_main = None

    def model(self):
        a = self.config.side_alphabet
        pmfs = tuple(gaussian_pmf(float(s), -a, a) for s in self.side_sigmas)
        m = self.config.main_alphabet
        return StreamModel(pmfs, -m, m, self.scale_set)

    def side_frame(self):
        cfg = self.config
        shape = (cfg.side_height, cfg.side_width, cfg.channels)
        true_sigma = np.broadcast_to(self.side_sigmas / cfg.sigma_ratio_side, shape)
        values = _drift_values(
            self.rng, self.prev_side, true_sigma, cfg.mean_shift_side, cfg.temporal_drift
        )
        self.prev_side = values
        return SymbolTensor(_snap(values, cfg.side_alphabet), -cfg.side_alphabet, cfg.side_alphabet)

    def main_frame(self):
        cfg = self.config
        true_sigma = self.scale_set.scales[self.scale_index] / cfg.sigma_ratio_main
        values = _drift_values(
            self.rng, self.prev_main, true_sigma, 0.0, cfg.temporal_drift
        )
        self.prev_main = values
        return GaussianLatentSet(
            _snap(values, cfg.main_alphabet),
            self.scale_index,
            -cfg.main_alphabet,
            cfg.main_alphabet,
        )


def generate_container(config):
    """Builds the latent container described by a SynthConfig."""
    rng = np.random.default_rng(config.seed)
    kinds = frame_kinds(config.gop, config.frames)
    residual = _ModelSynth(config, rng)
    motion = _ModelSynth(config, rng) if config.motion else None

    frames = []
    for kind in kinds:
        motion_side = motion_main = None
        if kind != "I" and motion is not None:
            motion_side = motion.side_frame()
            motion_main = motion.main_frame()
        frames.append(
            LatentFrame(kind, residual.side_frame(), residual.main_frame(),
                        motion_side, motion_main)
        )
    return LatentContainer(
        residual.model(), tuple(frames), motion.model() if motion else None
    )
