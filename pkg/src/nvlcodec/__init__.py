"""Lossless entropy coding for neural video codec latents.

The toolkit measures how far a codec's learned entropy models sit from the
actual statistics of the latents it ships, and closes part of that distance
by refitting channel distributions per frame, reusing refit parameters
across frames when they repeat. Containers of latents (.nvl) encode to real
decodable bitstreams (.nvb); every reported saving is a ratio of coded file
sizes.
"""

from .accounting import (
    BitReport,
    expected_bits_factorized,
    expected_bits_hyper,
    gap,
    limit_bits_factorized,
    limit_bits_hyper,
    saving,
)
from .analyze import AnalysisReport, analyze_container, render_table, write_csv
from .codec import (
    DEFAULT_K,
    DEFAULT_S,
    SequenceStats,
    decode_sequence,
    encode_sequence,
)
from .container import (
    BitstreamContainer,
    LatentContainer,
    LatentFrame,
    StreamModel,
    read_bitstream,
    read_latent_container,
    write_bitstream,
    write_latent_container,
)
from .errors import (
    AlphabetError,
    CapacityError,
    CodecError,
    ConfigError,
    DecodeError,
    DomainError,
    EmptyGroupError,
    FormatError,
    ShapeError,
    StateError,
    UndefinedMetricError,
    VersionError,
)
from .latents import (
    GaussianLatentSet,
    PmfTable,
    ScaleSet,
    SymbolTensor,
    gaussian_pmf,
)
from .synth import (
    SynthConfig,
    drifted_sigma_preset,
    frame_kinds,
    generate_container,
    matched_preset,
)
from .verify import CheckResult, containers_match, render_verdicts, verify_container

__version__ = "0.1.0"

__all__ = [
    "AlphabetError",
    "AnalysisReport",
    "BitReport",
    "BitstreamContainer",
    "CapacityError",
    "CheckResult",
    "CodecError",
    "ConfigError",
    "DEFAULT_K",
    "DEFAULT_S",
    "DecodeError",
    "DomainError",
    "EmptyGroupError",
    "FormatError",
    "GaussianLatentSet",
    "LatentContainer",
    "LatentFrame",
    "PmfTable",
    "ScaleSet",
    "SequenceStats",
    "ShapeError",
    "StateError",
    "StreamModel",
    "SymbolTensor",
    "SynthConfig",
    "UndefinedMetricError",
    "VersionError",
    "analyze_container",
    "containers_match",
    "decode_sequence",
    "drifted_sigma_preset",
    "encode_sequence",
    "expected_bits_factorized",
    "expected_bits_hyper",
    "frame_kinds",
    "gap",
    "gaussian_pmf",
    "generate_container",
    "limit_bits_factorized",
    "limit_bits_hyper",
    "matched_preset",
    "read_bitstream",
    "read_latent_container",
    "render_table",
    "render_verdicts",
    "saving",
    "verify_container",
    "write_bitstream",
    "write_csv",
    "write_latent_container",
]
