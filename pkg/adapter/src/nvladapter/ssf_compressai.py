"""Scale-space-flow export backed by the compressai reference model.

Tensor mapping (compressai.models.video.ScaleSpaceFlow, weights loaded
from a checkpoint's state_dict):

    main latents      y from motion_encoder / res_encoder, captured by
                      forward hooks on each hyperprior's
                      gaussian_conditional; exported as raw values with
                      the predicted means/scales from the hyper decoder
    side latents      z from each hyperprior's entropy_bottleneck,
                      quantized to symbols around the bottleneck medians
    side tables       each entropy_bottleneck's quantized cdf rows
                      (what its range coder codes with), converted back
                      to pmfs; the trailing bypass bin is dropped and
                      the rows renormalized
    scale set         gaussian_conditional.scale_table after update()
    reported rate     -log2 of the likelihoods the model returns, i.e.
                      the rate compressai itself reports; it prices main
                      latents at the predicted scale, so it sits within
                      coding tolerance of the table-snapped rate rather
                      than exactly on it

The keyframe is coded with a separate image hyperprior whose tables the
single-residual-model container cannot carry, so the first input frame
only seeds the reference state and the export holds the remaining frames
as a P chain. Checkpoints whose module layout differs from the reference
implementation raise UnsupportedCodecError.
"""

import hashlib
from pathlib import Path

import numpy as np
import torch
from compressai.models.video import ScaleSpaceFlow
from PIL import Image

from .errors import ContractError, UnsupportedCodecError
from .manifest import ExportManifest
from .runtime import RawFrame, RawMain, StreamTables

CODEC_TAG = "ssf"

# Spatial multiple the reference network needs; frames are zero-padded.
PAD_MULTIPLE = 64

CDF_TOTAL = float(2 ** 16)


def _load_image(path):
    with Image.open(path) as img:
        rgb = np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0
    tensor = torch.from_numpy(rgb).permute(2, 0, 1).unsqueeze(0)
    _, _, height, width = tensor.shape
    pad_h = (-height) % PAD_MULTIPLE
    pad_w = (-width) % PAD_MULTIPLE
    if pad_h or pad_w:
        tensor = torch.nn.functional.pad(tensor, (0, pad_w, 0, pad_h))
    return tensor


def _plane_to_hwc(tensor):
    # (1, C, H, W) -> (H, W, C)
    return tensor.squeeze(0).permute(1, 2, 0).cpu().numpy()


def _bottleneck_tables(bottleneck, observed_lo, observed_hi):
    """Rebuilds per-channel pmfs from a bottleneck's quantized cdf rows."""
    cdf = bottleneck._quantized_cdf.cpu().numpy()
    offsets = bottleneck._offset.cpu().numpy().astype(np.int64)
    lengths = bottleneck._cdf_length.cpu().numpy().astype(np.int64)
    # Row c covers symbols offset[c] .. offset[c] + length[c] - 3 plus a
    # trailing bypass bin; the shared alphabet is the union, widened to
    # whatever symbols actually occurred.
    lo = min(int(offsets.min()), observed_lo)
    hi = max(int((offsets + lengths - 3).max()), observed_hi)
    rows = []
    for c in range(cdf.shape[0]):
        pmf = np.diff(cdf[c, : lengths[c]]) / CDF_TOTAL
        pmf = pmf[:-1]  # drop the bypass bin
        row = np.zeros(hi - lo + 1)
        start = int(offsets[c]) - lo
        row[start : start + pmf.size] = pmf
        total = row.sum()
        if total <= 0.0:
            raise ContractError(f"bottleneck channel {c} has an empty cdf row")
        rows.append(row / total)
    return tuple(rows), lo, hi


def _symmetric_bounds(arrays):
    reach = max(int(np.abs(a).max()) for a in arrays) if arrays else 1
    reach = max(reach, 1)
    return -reach, reach


class _HyperpriorTap:
    """Captures one hyperprior's per-call latents via forward hooks."""

    def __init__(self, hyperprior):
        self._bottleneck = hyperprior.entropy_bottleneck
        self._conditional = hyperprior.gaussian_conditional
        self.side_calls = []  # per call: z symbols as (H, W, C) ints
        self.main_calls = []  # per call: (values, means, scales) flat arrays
        self._handles = [
            self._bottleneck.register_forward_hook(self._on_bottleneck),
            self._conditional.register_forward_hook(self._on_conditional, with_kwargs=True),
        ]

    def _on_bottleneck(self, module, args, output):
        z = args[0]
        medians = module._get_medians().detach()
        symbols = module.quantize(z, "symbols", medians)
        self.side_calls.append(_plane_to_hwc(symbols).astype(np.int64))

    def _on_conditional(self, module, args, kwargs, output):
        y = args[0]
        scales = args[1] if len(args) > 1 else kwargs["scales"]
        means = kwargs.get("means")
        if means is None and len(args) > 2:
            means = args[2]
        if means is None:
            means = torch.zeros_like(y)
        floor = float(module.scale_table[0]) if len(module.scale_table) else 0.11
        self.main_calls.append(
            (
                y.detach().cpu().numpy().ravel(),
                means.detach().cpu().numpy().ravel(),
                np.maximum(scales.detach().cpu().numpy().ravel(), floor),
            )
        )

    def remove(self):
        for handle in self._handles:
            handle.remove()


class CompressaiScaleSpaceRuntime:
    """Pretrained scale-space-flow checkpoint with the export surface."""

    codec_tag = CODEC_TAG

    def __init__(self, checkpoint_path):
        blob = Path(checkpoint_path).read_bytes()
        self.checkpoint_id = hashlib.sha256(blob).hexdigest()[:16]
        state = torch.load(checkpoint_path, map_location="cpu", weights_only=False)
        if isinstance(state, dict) and "state_dict" in state:
            state = state["state_dict"]
        net = ScaleSpaceFlow()
        try:
            net.load_state_dict(state)
            net.eval()
            net.update(force=True)
            self._motion = net.motion_hyperprior
            self._residual = net.res_hyperprior
        except (AttributeError, RuntimeError) as exc:
            raise UnsupportedCodecError(
                f"checkpoint does not match the reference scale-space-flow layout: {exc}"
            ) from exc
        self._net = net
        self._frames = None
        self._reported_bits = None
        self._tables = None

    def code_frames(self, video_frames):
        images = [_load_image(p) for p in video_frames]
        if len(images) < 2:
            raise ContractError("scale-space-flow export needs a keyframe plus inter frames")
        taps = (_HyperpriorTap(self._motion), _HyperpriorTap(self._residual))
        try:
            with torch.no_grad():
                out = self._net(images)
        finally:
            for tap in taps:
                tap.remove()
        motion_tap, residual_tap = taps
        coded = len(images) - 1
        for tap, what in ((motion_tap, "motion"), (residual_tap, "residual")):
            if len(tap.side_calls) != coded or len(tap.main_calls) != coded:
                raise UnsupportedCodecError(
                    f"expected one {what} hyperprior call per inter frame, "
                    f"got {len(tap.main_calls)} for {coded} frames"
                )
        frames = []
        for i in range(coded):
            res_values, res_means, res_scales = residual_tap.main_calls[i]
            mot_values, mot_means, mot_scales = motion_tap.main_calls[i]
            frames.append(
                RawFrame(
                    "P",
                    residual_tap.side_calls[i],
                    RawMain(res_values, res_means, res_scales),
                    motion_tap.side_calls[i],
                    RawMain(mot_values, mot_means, mot_scales),
                )
            )
        self._frames = frames
        self._reported_bits = self._rate_from_likelihoods(out["likelihoods"])
        self._tables = (
            self._stream_tables(self._residual, residual_tap),
            self._stream_tables(self._motion, motion_tap),
        )
        return frames

    @staticmethod
    def _rate_from_likelihoods(likelihoods):
        bits = 0.0
        for frame_index, frame_likelihoods in enumerate(likelihoods):
            for name, values in frame_likelihoods.items():
                if frame_index == 0 and name == "keyframe":
                    continue  # the keyframe stays out of the export
                if isinstance(values, dict):
                    values = list(values.values())
                elif torch.is_tensor(values):
                    values = [values]
                for tensor in values:
                    bits -= float(torch.log2(tensor).sum())
        return bits

    def _stream_tables(self, hyperprior, tap):
        side_lo = min(int(call.min()) for call in tap.side_calls)
        side_hi = max(int(call.max()) for call in tap.side_calls)
        rows, lo, hi = _bottleneck_tables(hyperprior.entropy_bottleneck, side_lo, side_hi)
        symbols = [np.rint(v - m) for v, m, _ in tap.main_calls]
        main_lo, main_hi = _symmetric_bounds(symbols)
        scales = hyperprior.gaussian_conditional.scale_table.cpu().numpy().astype(np.float64)
        return StreamTables(rows, lo, hi, main_lo, main_hi, scales)

    def entropy_tables(self):
        if self._tables is None:
            raise ContractError("entropy tables are sized after code_frames, not before")
        return self._tables

    def reported_rate_bits(self):
        if self._reported_bits is None:
            raise ContractError("rate is reported after code_frames, not before")
        return self._reported_bits

    def default_manifest(self, video_frames):
        coded = len(video_frames) - 1
        if coded < 1:
            raise ContractError("scale-space-flow export needs a keyframe plus inter frames")
        return ExportManifest(self.codec_tag, self.checkpoint_id, "P", coded, (True,) * coded)
