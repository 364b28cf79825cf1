"""Export manifests: what a coded sequence claims about itself.

A manifest pins the codec tag, the checkpoint, the GOP layout, and which
frames carry motion streams. Exports are validated against it so a
runtime cannot silently emit a different sequence than the one asked for.
"""

from dataclasses import dataclass

from nvlcodec import ConfigError, frame_kinds

from .errors import ManifestError


@dataclass(frozen=True)
class ExportManifest:
    """Declared shape of one exported sequence."""

    codec_tag: str
    checkpoint_id: str
    gop: str  # preset name or explicit kind pattern, as frame_kinds accepts
    frame_count: int
    motion_flags: tuple  # per coded frame: does it carry motion streams?

    def __post_init__(self):
        for field in ("codec_tag", "checkpoint_id"):
            value = getattr(self, field)
            if not isinstance(value, str) or not value.strip():
                raise ManifestError(f"{field} must be a non-empty string")
        if not isinstance(self.frame_count, int) or self.frame_count < 1:
            raise ManifestError(f"frame_count must be a positive int, got {self.frame_count!r}")
        object.__setattr__(self, "motion_flags", tuple(bool(f) for f in self.motion_flags))
        if len(self.motion_flags) != self.frame_count:
            raise ManifestError(
                f"{len(self.motion_flags)} motion flags for {self.frame_count} frames"
            )
        for index, (kind, flag) in enumerate(zip(self.kinds, self.motion_flags)):
            if kind == "I" and flag:
                raise ManifestError(f"frame {index} is an I frame but flags motion streams")

    @property
    def kinds(self):
        """Per-frame kinds expanded from the GOP field."""
        try:
            return frame_kinds(self.gop, self.frame_count)
        except ConfigError as exc:
            raise ManifestError(f"bad gop {self.gop!r}: {exc}") from exc

    @classmethod
    def p_chain(cls, codec_tag, checkpoint_id, frame_count):
        """One I frame followed by P frames, motion on every inter frame."""
        flags = (False,) + (True,) * (frame_count - 1)
        return cls(codec_tag, checkpoint_id, "p-chain", frame_count, flags)
