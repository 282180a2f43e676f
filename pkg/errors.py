"""
Exception hierarchy shared by every service module.

Each error carries the CLI exit code it maps to, so cli.py can translate
failures without a lookup table.
"""

EXIT_OK = 0
EXIT_REJECT = 1
EXIT_PARAMETER = 2
EXIT_IO = 3
EXIT_FORMAT = 4
EXIT_COPY_BUDGET = 5
EXIT_UNDECIDED = 6
EXIT_NO_SEPARATION = 7


class QmpSigError(Exception):
    """Base class for all simulator errors."""
    exit_code = EXIT_PARAMETER


class ParameterError(QmpSigError, ValueError):
    """Invalid parameter (out of range, wrong arity, size cap exceeded)."""
    exit_code = EXIT_PARAMETER


class DimensionError(ParameterError):
    """Operands have incompatible dimensions."""


class ChallengeError(ParameterError):
    """Challenge violates k < M < N; revealing the full state leaks the key."""


class AlphabetError(ParameterError):
    """Symbol outside the alphabet or an undefined angle mapping."""


class EnumerationBudgetExceeded(ParameterError):
    """Brute-force enumeration would exceed the configured budget."""


class CopyBudgetExhausted(QmpSigError):
    """The verifier ran out of signature copies."""
    exit_code = EXIT_COPY_BUDGET


class FormatError(QmpSigError):
    """An artifact document is malformed or has the wrong version."""
    exit_code = EXIT_FORMAT


class ArtifactIOError(QmpSigError):
    """Reading or writing an artifact failed."""
    exit_code = EXIT_IO
