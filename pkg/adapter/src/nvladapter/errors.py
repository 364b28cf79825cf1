"""Exceptions raised by the export adapter.

Errors from the container library itself (validation, serialization)
propagate unchanged; these cover what the adapter adds on top.
"""


class AdapterError(Exception):
    """Base class for everything the adapter raises."""


class ManifestError(AdapterError):
    """A manifest is malformed or disagrees with the runtime's output."""


class ContractError(AdapterError):
    """A codec runtime violated the export contract."""


class UnsupportedCodecError(AdapterError):
    """The requested codec has no usable runtime builder here."""
