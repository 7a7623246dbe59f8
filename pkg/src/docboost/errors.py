"""Exception hierarchy shared across the pipeline."""

from __future__ import annotations


class DocboostError(Exception):
    """Base class for every error this package raises on purpose."""


class SchemaError(DocboostError):
    """An input file or payload does not match the expected shape."""

    def __init__(self, message: str, *, path: str | None = None, field: str | None = None):
        self.path = path
        self.field = field
        where = " ".join(p for p in (path, field and f"field {field!r}") if p)
        super().__init__(f"{message}" + (f" ({where})" if where else ""))


class MissingInput(DocboostError):
    """A required input file or directory does not exist."""


class UsageError(DocboostError):
    """Bad command line arguments."""


class NetworkError(DocboostError):
    """Transport-level failure talking to a remote service."""


class ServiceError(DocboostError):
    """The remote service answered, but not with something usable."""


class RateLimited(ServiceError):
    """Service asked us to back off."""

    def __init__(self, retry_after: float | None = None):
        self.retry_after = retry_after
        suffix = f", retry after {retry_after:g}s" if retry_after is not None else ""
        super().__init__(f"rate limited{suffix}")


class MalformedResponse(ServiceError):
    """Response body could not be decoded."""


class NoCaptionTrack(DocboostError):
    """Video has no manually authored caption track."""


class MalformedCaption(DocboostError):
    """Timed-text payload yielded no parsable cue."""


class EmptyCorpus(DocboostError):
    """An operation that needs documents got none."""


class DimensionMismatch(DocboostError):
    """Two vectors of different lengths were combined."""


class ScorerUnavailable(DocboostError):
    """The configured scorer cannot answer (dead sidecar, replay miss)."""

    def __init__(self, message: str, *, request_hash: str | None = None):
        self.request_hash = request_hash
        super().__init__(message if request_hash is None else f"{message} [{request_hash}]")


class ProviderUnavailable(DocboostError):
    """The configured embedding provider cannot answer."""


class OverheadTooLarge(DocboostError):
    """Fixed prompt parts alone exceed the token allowance."""


class EmptyCompletion(DocboostError):
    """The language model returned an empty or whitespace-only answer."""


class KeyMismatch(DocboostError):
    """Prediction and gold files do not cover the same items."""

    def __init__(self, missing: list[str], extra: list[str]):
        self.missing = missing
        self.extra = extra
        parts = []
        if missing:
            parts.append("missing from predictions: " + ", ".join(sorted(missing)))
        if extra:
            parts.append("unexpected in predictions: " + ", ".join(sorted(extra)))
        super().__init__("; ".join(parts) or "key mismatch")


class ConfigError(DocboostError):
    """Configuration value out of range or inconsistent."""
