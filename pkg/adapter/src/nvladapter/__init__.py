"""Export adapter: real codec latents into .nvl containers.

Pretrained neural video codecs keep their quantized latents, learned pmf
tables, and predicted means/scales internal. This package reads those
internals from a codec runtime and packs them, unchanged, into the .nvl
interchange format so the recoding toolkit can measure and close the gap
between the learned tables and the latents actually shipped.
"""

from .errors import AdapterError, ContractError, ManifestError, UnsupportedCodecError
from .export import export_sequence, stream_model
from .manifest import ExportManifest
from .mappings import RUNTIME_BUILDERS, resolve_codec
from .runtime import RawFrame, RawMain, StreamTables
from .simulated import SimulatedScaleSpaceRuntime

__version__ = "0.1.0"

__all__ = [
    "AdapterError",
    "ContractError",
    "ExportManifest",
    "ManifestError",
    "RawFrame",
    "RawMain",
    "RUNTIME_BUILDERS",
    "SimulatedScaleSpaceRuntime",
    "StreamTables",
    "UnsupportedCodecError",
    "export_sequence",
    "resolve_codec",
    "stream_model",
    "__version__",
]
