"""Exception types shared across the engine."""


class AnimaError(Exception):
    """Base class for all engine errors."""


class ValidationError(AnimaError):
    """A domain value violates one of its invariants."""


class ParseError(AnimaError):
    """A document could not be parsed.

    Carries ``line`` / ``field`` diagnostics when they are known.
    """

    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        super().__init__(message)
        self.line = line
        self.field = field


class OrderViolation(AnimaError):
    """A message would break the per-session total order."""


class DuplicateId(AnimaError):
    """An id is already present in the target collection."""


class ProviderError(AnimaError):
    """Base class for generation-provider failures."""


class ProviderTimeout(ProviderError):
    """The provider did not answer within the configured timeout."""


class ProviderRejected(ProviderError):
    """The provider answered with a non-retryable or exhausted-retry failure."""

    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


class NoScriptMatch(ProviderError):
    """The scripted provider has no entry (and no default) for a request."""


class SchemaViolation(AnimaError):
    """Structured output failed schema validation after the repair pass."""

    def __init__(self, schema_id: str, problems: list[str]):
        super().__init__(f"{schema_id}: " + "; ".join(problems))
        self.schema_id = schema_id
        self.problems = problems


class SessionClosed(AnimaError):
    """The session has already been concluded."""


class TurnFailed(AnimaError):
    """The turn could not produce any response (awareness and quick both failed)."""


class InsufficientSamples(AnimaError):
    """Not enough samples in the pool to draw a test set."""


class ScoreOutOfRange(AnimaError):
    """A questionnaire score is outside the 1..7 scale."""
