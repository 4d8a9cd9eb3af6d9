"""Exception types shared across the engine."""


class ArchEngError(Exception):
    """Base class for all engine errors."""


class ParseError(ArchEngError):
    """Malformed block text. Carries a 1-based line number."""

    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class InexactDivision(ArchEngError):
    pass


class Overflow(ArchEngError):
    pass


class SizeLimitExceeded(ArchEngError):
    pass


class UnknownParent(ArchEngError):
    pass


class NoTrainedNodes(ArchEngError):
    pass


class EmptyStore(ArchEngError):
    pass


class MalformedResponse(ArchEngError):
    """LLM reply violates the expected output protocol even after a reprompt."""


class NoBlockFound(ArchEngError):
    pass


class MaxRetryExceeded(ArchEngError):
    pass


class ProviderError(ArchEngError):
    """Remote LLM/embedding provider failure."""


class ReplayMismatch(ArchEngError):
    """Replay client received a request absent from its transcript."""


class BindingError(ArchEngError):
    pass


class Infeasible(ArchEngError):
    pass


class UnknownBackend(ArchEngError):
    pass
