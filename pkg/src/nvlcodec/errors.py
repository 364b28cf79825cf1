"""Exception types shared across the toolkit."""


class CodecError(Exception):
    """Base class for all toolkit errors."""


class ShapeError(CodecError, ValueError):
    """Array arguments disagree in length or shape."""


class AlphabetError(CodecError, ValueError):
    """Symbol values fall outside the declared alphabet, or bounds are inverted."""


class DomainError(CodecError, ValueError):
    """Scalar parameter outside its mathematical domain (e.g. non-positive scale)."""


class EmptyGroupError(CodecError):
    """A scale group holds no elements; the caller decides whether to skip it."""


class CapacityError(CodecError, ValueError):
    """Alphabet too large for the coder's probability precision."""


class StateError(CodecError):
    """Temporal state disagrees with the configuration it is used with."""


class UndefinedMetricError(CodecError, ZeroDivisionError):
    """A ratio metric was requested with a zero denominator."""


class FormatError(CodecError):
    """A container file violates its format; carries the field and byte offset."""

    def __init__(self, message, field=None, offset=None):
        self.field = field
        self.offset = offset
        parts = [message]
        if field is not None:
            parts.append(f"field={field}")
        if offset is not None:
            parts.append(f"offset={offset}")
        super().__init__("; ".join(parts))


class VersionError(FormatError):
    """Container version or header configuration not supported by this build."""


class DecodeError(CodecError):
    """An entropy-coded stream cannot be decoded; carries the byte position."""

    def __init__(self, message, position=None):
        self.position = position
        if position is not None:
            message = f"{message} (position {position})"
        super().__init__(message)


class ConfigError(CodecError, ValueError):
    """Command-line or synthesis configuration is inconsistent."""
