"""Exception hierarchy shared by every module.

The command line maps each family to a distinct exit code, so callers can
tell a bad input file from a window that leaves the grid from a numerical
breakdown without parsing messages.
"""

from __future__ import annotations


class LandauKitError(Exception):
    """Base class for all package errors."""


class ConfigError(LandauKitError, ValueError):
    """Invalid configuration or argument values (exit code 2)."""


class DomainError(LandauKitError, ValueError):
    """Input outside the mathematical domain of an operation (exit code 3)."""


class WindowError(DomainError):
    """A requested cylinder or scaling window leaves the available data."""


class NumericalError(LandauKitError, RuntimeError):
    """Solver breakdown or a violated runtime invariant (exit code 4)."""


class SnapshotFormatError(LandauKitError, ValueError):
    """Base class for binary snapshot decoding failures."""


class MagicMismatchError(SnapshotFormatError):
    """The leading four bytes do not identify a known snapshot type."""


class VersionMismatchError(SnapshotFormatError):
    """The snapshot was written by an unsupported format version."""


class TruncatedPayloadError(SnapshotFormatError):
    """The byte stream ends before the declared payload."""
