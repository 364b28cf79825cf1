"""Per-codec runtime builders.

Every codec lays out its entropy-model internals differently, so there
is no standard mapping; each builder documents how its codec's tensors
land on the export surface and constructs a runtime only when the
packages it needs are importable. Asking for a codec whose builder
cannot run here raises UnsupportedCodecError with the reason.

Registered tags:

    ssf-sim   deterministic stand-in with scale-space-flow structure;
              runs anywhere, seeds itself from the checkpoint bytes
    ssf       scale-space-flow via the compressai reference
              implementation; needs torch, compressai, and Pillow
"""

from .errors import UnsupportedCodecError
from .simulated import SimulatedScaleSpaceRuntime


def _build_simulated(checkpoint_path):
    return SimulatedScaleSpaceRuntime(checkpoint_path)


def _build_scale_space_flow(checkpoint_path):
    try:
        from . import ssf_compressai
    except ImportError as exc:
        raise UnsupportedCodecError(
            f"codec 'ssf' needs torch, compressai, and Pillow importable ({exc})"
        ) from exc
    return ssf_compressai.CompressaiScaleSpaceRuntime(checkpoint_path)


RUNTIME_BUILDERS = {
    "ssf-sim": _build_simulated,
    "ssf": _build_scale_space_flow,
}


def resolve_codec(tag, checkpoint_path):
    """Builds the runtime registered for tag, loading checkpoint_path."""
    builder = RUNTIME_BUILDERS.get(tag)
    if builder is None:
        known = ", ".join(sorted(RUNTIME_BUILDERS))
        raise UnsupportedCodecError(f"unknown codec {tag!r}; registered: {known}")
    return builder(checkpoint_path)
