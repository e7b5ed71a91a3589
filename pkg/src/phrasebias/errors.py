"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: usage errors exit 1, data errors
exit 2, transport errors exit 3.
"""

from __future__ import annotations


class PhraseBiasError(Exception):
    """Base class for all errors raised by this package."""


class UsageError(PhraseBiasError):
    """Invalid flag/argument combination; rejected before any work starts."""


class DataError(PhraseBiasError):
    """Malformed or inconsistent input data (files, corpora, models)."""


class TransportError(PhraseBiasError):
    """A remote completion call failed after exhausting retries.

    Attributes
    ----------
    pass_index : int
        Which pipeline pass failed (1 = transcription, 2 = translation).
    attempts : int
        Number of attempts made before giving up.
    """

    def __init__(self, message: str, pass_index: int = 0, attempts: int = 0):
        super().__init__(message)
        self.pass_index = pass_index
        self.attempts = attempts
