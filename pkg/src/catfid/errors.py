"""Exception hierarchy shared across the package."""


class CatfidError(Exception):
    """Base class for all package errors."""


class EmptyInput(CatfidError):
    """A nonempty sample multiset or value multiset was required."""


class EmptyFamily(CatfidError):
    """A distinguisher family with at least one member was required."""


class CodecMismatch(CatfidError):
    """A distinguisher or transform cannot read the sample's payload codec."""


class TooFewSamples(CatfidError):
    """An operation needs more samples than were provided."""


class DataError(CatfidError):
    """Malformed input data. Carries the offending line number when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConfigError(CatfidError):
    """Invalid run configuration (unknown keys, out-of-range values)."""


class ParseError(CatfidError):
    """Program text rejected. Carries byte offset and the expected token."""

    def __init__(self, message: str, offset: int):
        self.offset = offset
        super().__init__(f"offset {offset}: {message}")


class StepBudgetExceeded(CatfidError):
    """Interpreter step budget exhausted before enough symbols were emitted."""


class NoExplanation(CatfidError):
    """No program within the search bound reproduces the prefix."""


class GenerationExhausted(CatfidError):
    """Item generation hit the attempt limit without an acceptable candidate."""


class OutOfAlphabet(CatfidError):
    """A symbol outside the configured alphabet was submitted."""


class MalformedEnv(CatfidError):
    """Environment description violates its invariants."""


class EmptyHoldout(CatfidError):
    """A suite evaluation needs at least one holdout category."""


class UnrenderableCodec(CatfidError):
    """Judging sessions only accept payloads a human can be shown."""


class UnknownSession(CatfidError):
    """No session with the given id."""


class UnknownItem(CatfidError):
    """No item with the given id in the session."""


class SessionClosed(CatfidError):
    """The session no longer accepts this operation."""


class IncompleteJudging(CatfidError):
    """Some items have no verdicts yet. Carries the unanswered item ids."""

    def __init__(self, unanswered: list[str]):
        self.unanswered = list(unanswered)
        super().__init__(f"unanswered items: {', '.join(self.unanswered)}")


class InvalidReport(CatfidError):
    """A report document is missing required structure (e.g. its manifest)."""
