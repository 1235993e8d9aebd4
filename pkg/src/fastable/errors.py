"""Exception hierarchy shared by all fastable modules."""

from __future__ import annotations


class FastableError(Exception):
    """Base class for every error raised by this package."""


# descriptor
class InputTooSmall(FastableError, ValueError):
    pass


class WrongSize(FastableError, ValueError):
    pass


class LengthMismatch(FastableError, ValueError):
    pass


class UnreadableImage(FastableError):
    def __init__(self, filename: str, reason: str = ""):
        self.filename = filename
        msg = f"cannot read image {filename!r}"
        super().__init__(f"{msg}: {reason}" if reason else msg)


# sequence_store
class EmptyDirectory(FastableError):
    pass


class BadMagic(FastableError):
    pass


class UnsupportedVersion(FastableError):
    pass


class CorruptLength(FastableError):
    pass


class WidthMismatch(FastableError, ValueError):
    pass


class DuplicateSegment(FastableError, ValueError):
    pass


# matcher
class WindowTooLong(FastableError, ValueError):
    pass


class NoThreshold(FastableError):
    pass


# analysis
class SinglePartition(FastableError, ValueError):
    pass


class MalformedTruth(FastableError, ValueError):
    pass


# bench
class OutputMismatch(FastableError):
    """The fast matcher disagreed with the baseline; a correctness bug."""
