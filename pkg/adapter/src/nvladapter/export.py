"""Packs a codec runtime's latents and tables into container bytes.

The exporter reads what the codec's arithmetic coder would use, verbatim:
side tables are floored and renormalized into codable pmfs, main latents
are centered on their predicted means and snapped to the predefined scale
set with the shared smallest-scale-not-below rule. Nothing is refit here;
mismatch between tables and data is exactly what downstream analysis is
meant to see.
"""

from nvlcodec import (
    LatentContainer,
    LatentFrame,
    PmfTable,
    ScaleSet,
    StreamModel,
    SymbolTensor,
    write_latent_container,
)
from nvlcodec.latents import center_and_assign, floor_and_normalize

from .errors import ContractError, ManifestError


def stream_model(tables):
    """Floors one stream family's raw tables into a coding model."""
    pmfs = tuple(
        PmfTable(tables.side_lo, tables.side_hi, floor_and_normalize(row))
        for row in tables.side_pmfs
    )
    return StreamModel(pmfs, tables.main_lo, tables.main_hi, ScaleSet(tables.main_scales))


def _check_against_manifest(raw_frames, manifest):
    if len(raw_frames) != manifest.frame_count:
        raise ManifestError(
            f"runtime coded {len(raw_frames)} frames, manifest declares {manifest.frame_count}"
        )
    for index, (raw, kind, flag) in enumerate(
        zip(raw_frames, manifest.kinds, manifest.motion_flags)
    ):
        if raw.kind != kind:
            raise ManifestError(
                f"frame {index} came out {raw.kind!r}, manifest declares {kind!r}"
            )
        if raw.has_motion != flag:
            state = "carries" if raw.has_motion else "lacks"
            raise ManifestError(f"frame {index} {state} motion streams against the manifest")


def _latent_frame(raw, res_tables, res_scales, mot_tables, mot_scales):
    side = SymbolTensor(raw.residual_side, res_tables.side_lo, res_tables.side_hi)
    main = center_and_assign(
        raw.residual_main.values,
        raw.residual_main.means,
        raw.residual_main.predicted_scales,
        res_scales,
        res_tables.main_lo,
        res_tables.main_hi,
    )
    motion_side = motion_main = None
    if raw.has_motion:
        motion_side = SymbolTensor(raw.motion_side, mot_tables.side_lo, mot_tables.side_hi)
        motion_main = center_and_assign(
            raw.motion_main.values,
            raw.motion_main.means,
            raw.motion_main.predicted_scales,
            mot_scales,
            mot_tables.main_lo,
            mot_tables.main_hi,
        )
    return LatentFrame(raw.kind, side, main, motion_side, motion_main)


def export_sequence(codec_runtime, video_frames, manifest):
    """Runs the codec over video_frames and returns .nvl container bytes.

    The coded frames must match the manifest's count, kinds, and motion
    flags; mismatches raise ManifestError. A runtime whose frames need
    motion tables it does not provide raises ContractError. Container
    validation errors (symbols outside the declared alphabets, malformed
    tables) propagate from the container library.
    """
    raw_frames = codec_runtime.code_frames(video_frames)
    _check_against_manifest(raw_frames, manifest)
    res_tables, mot_tables = codec_runtime.entropy_tables()
    needs_motion = any(manifest.motion_flags)
    if needs_motion and mot_tables is None:
        raise ContractError("frames carry motion streams but the runtime has no motion tables")
    residual_model = stream_model(res_tables)
    motion_model = stream_model(mot_tables) if needs_motion else None
    res_scales = residual_model.main_scales
    mot_scales = motion_model.main_scales if motion_model is not None else None
    frames = tuple(
        _latent_frame(raw, res_tables, res_scales, mot_tables, mot_scales)
        for raw in raw_frames
    )
    container = LatentContainer(residual_model, frames, motion_model)
    return write_latent_container(container)
