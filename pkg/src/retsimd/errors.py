"""Exception hierarchy shared across the pipeline.

Every error raised on a contract violation derives from ``RetsimdError`` so
callers (and the CLI) can distinguish pipeline failures from programming
bugs.  Subclasses carry enough context to point at the offending input.
"""

from __future__ import annotations


class RetsimdError(Exception):
    """Base class for all pipeline errors."""


class ContractError(RetsimdError):
    """An argument violated a documented precondition."""


class IngestionError(RetsimdError):
    """A dataset record could not be parsed or validated.

    ``line`` is the 1-based line number in the source file, when known.
    """

    def __init__(self, message: str, *, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where = f" [{path}{':' + str(line) if line is not None else ''}]"
        super().__init__(message + where)


class ValidationError(IngestionError):
    """A parsed record violated a dataset invariant (bad label, dup id)."""


class GenerationError(RetsimdError):
    """Feature generation failed for one segment.

    ``segment_index`` is the 0-based index of the failing segment.
    """

    def __init__(self, message: str, *, segment_index: int | None = None):
        self.segment_index = segment_index
        if segment_index is not None:
            message = f"{message} (segment {segment_index})"
        super().__init__(message)


class CacheMissError(RetsimdError):
    """A required cache entry was absent."""


class NumericError(RetsimdError):
    """A non-finite value appeared where the contract requires finiteness."""


class EvaluationError(RetsimdError):
    """A prediction pass failed; carries the offending sample id."""

    def __init__(self, message: str, *, sample_id: str | None = None):
        self.sample_id = sample_id
        if sample_id is not None:
            message = f"{message} (sample {sample_id!r})"
        super().__init__(message)


class RemoteBackendError(RetsimdError):
    """A remote encoder or generator endpoint misbehaved."""


class ConfigError(RetsimdError):
    """An experiment configuration failed validation."""
