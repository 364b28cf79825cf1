"""Raw material a codec runtime hands the exporter.

A runtime is duck-typed; anything with this surface can be exported:

    codec_tag        str, codec name/version tag
    checkpoint_id    str, stable identifier of the loaded weights
    code_frames(video_frames) -> list of RawFrame
        Runs inference over the given frame files, in order. The number
        of coded frames may differ from the number of inputs (a codec
        may fold its keyframe into reference state rather than export
        it).
    entropy_tables() -> (residual StreamTables, motion StreamTables or None)
        The tables the codec's own arithmetic coder would use. Called
        after code_frames: alphabet bounds may be sized to the symbols
        actually observed.
    reported_rate_bits() -> float
        The codec's own entropy-model estimate, in bits, for everything
        code_frames returned. Coding the exported container with the
        learned tables alone must land within 0.5% of this number.
    default_manifest(video_frames) -> ExportManifest
        The manifest describing how this runtime codes those inputs.

All probability tables come in raw: the exporter floors and renormalizes
them before they are written, so rows only need to be non-negative with
roughly unit mass.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ContractError

FRAME_KINDS = ("I", "P", "B")

# Raw table rows may carry tail mass outside the alphabet; anything this
# far from unit sum is a contract violation, not tail slack.
TABLE_SUM_TOL = 0.01


@dataclass(frozen=True, eq=False)
class StreamTables:
    """Learned entropy-model tables for one stream family."""

    side_pmfs: tuple  # per side channel: 1-d probabilities over [side_lo, side_hi]
    side_lo: int
    side_hi: int
    main_lo: int
    main_hi: int
    main_scales: np.ndarray  # ascending positive coding scales

    def __post_init__(self):
        if not self.side_pmfs:
            raise ContractError("stream tables need at least one side channel")
        width = self.side_hi - self.side_lo + 1
        if width < 1:
            raise ContractError(f"side alphabet [{self.side_lo}, {self.side_hi}] is empty")
        rows = []
        for index, row in enumerate(self.side_pmfs):
            row = np.asarray(row, dtype=np.float64)
            if row.shape != (width,):
                raise ContractError(
                    f"side channel {index} table has shape {row.shape}, alphabet needs ({width},)"
                )
            if not np.all(np.isfinite(row)) or row.min() < 0.0:
                raise ContractError(f"side channel {index} table has invalid probabilities")
            if abs(row.sum() - 1.0) > TABLE_SUM_TOL:
                raise ContractError(f"side channel {index} table sums to {row.sum():.4f}")
            rows.append(row)
        object.__setattr__(self, "side_pmfs", tuple(rows))
        if self.main_lo > self.main_hi:
            raise ContractError(f"main alphabet [{self.main_lo}, {self.main_hi}] is empty")
        scales = np.asarray(self.main_scales, dtype=np.float64)
        object.__setattr__(self, "main_scales", scales)
        if scales.ndim != 1 or scales.size == 0:
            raise ContractError("main_scales must be a non-empty 1-d array")
        if scales[0] <= 0.0 or np.any(np.diff(scales) <= 0.0):
            raise ContractError("main_scales must be positive and strictly increasing")


@dataclass(frozen=True, eq=False)
class RawMain:
    """Main latents before centering: values with predicted means and scales."""

    values: np.ndarray
    means: np.ndarray
    predicted_scales: np.ndarray

    def __post_init__(self):
        arrays = {}
        for field in ("values", "means", "predicted_scales"):
            arr = np.asarray(getattr(self, field), dtype=np.float64).ravel()
            if not np.all(np.isfinite(arr)):
                raise ContractError(f"{field} contains non-finite entries")
            arrays[field] = arr
            object.__setattr__(self, field, arr)
        if not (arrays["values"].shape == arrays["means"].shape == arrays["predicted_scales"].shape):
            raise ContractError("values, means, and predicted_scales must have equal lengths")
        if arrays["predicted_scales"].size and arrays["predicted_scales"].min() <= 0.0:
            raise ContractError("predicted_scales must be positive")

    @property
    def size(self):
        return int(self.values.size)


@dataclass(frozen=True, eq=False)
class RawFrame:
    """One coded frame's latents as the codec produced them."""

    kind: str
    residual_side: np.ndarray  # int, (height, width, channels)
    residual_main: RawMain
    motion_side: np.ndarray = None
    motion_main: RawMain = None

    def __post_init__(self):
        if self.kind not in FRAME_KINDS:
            raise ContractError(f"frame kind must be one of {FRAME_KINDS}, got {self.kind!r}")
        object.__setattr__(self, "residual_side", _check_side(self.residual_side, "residual_side"))
        if (self.motion_side is None) != (self.motion_main is None):
            raise ContractError("motion_side and motion_main must be both present or both absent")
        if self.motion_side is not None:
            object.__setattr__(self, "motion_side", _check_side(self.motion_side, "motion_side"))

    @property
    def has_motion(self):
        return self.motion_side is not None


def _check_side(symbols, what):
    symbols = np.asarray(symbols)
    if not np.issubdtype(symbols.dtype, np.integer):
        raise ContractError(f"{what} must hold integer symbols")
    if symbols.ndim != 3:
        raise ContractError(f"{what} must be shaped (height, width, channels), got {symbols.shape}")
    return symbols
