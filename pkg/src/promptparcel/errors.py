"""Exception types shared across the engine."""


class EngineError(Exception):
    """Base class for all promptparcel errors."""


# --- text ---

class DimensionMismatch(EngineError):
    """Two embedding vectors of different dimension were compared."""


# --- data ---

class ParseError(EngineError):
    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class SchemaError(EngineError):
    def __init__(self, message: str, line_number: int | None = None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class EmptyWorkload(EngineError):
    """A dataset file produced zero prompts."""


# --- clique ---

class MissingConcept(EngineError):
    def __init__(self, prompt_id: str):
        super().__init__(
            f"prompt {prompt_id!r} has no concept label and the question "
            "classifier is disabled"
        )
        self.prompt_id = prompt_id


class InvalidBatchSize(EngineError):
    """Requested batch size below 1."""


class InstanceTooLarge(EngineError):
    """Brute-force grouping refused an instance above its size guard."""


# --- batch ---

class EmptyGroup(EngineError):
    """build_batch called with no prompts."""


class NoAnchorsFound(EngineError):
    """A completion contained no numeric itemization anchors."""


# --- backend ---

class BackendError(EngineError):
    """Base class for completion-backend failures."""


class TransportError(BackendError):
    """Network-level failure talking to a live endpoint."""


class HttpStatus(BackendError):
    def __init__(self, code: int, body: str = ""):
        super().__init__(f"HTTP status {code}")
        self.code = code
        self.body = body


class MalformedResponse(BackendError):
    """Endpoint replied 200 but the body did not match the wire format."""


class Timeout(BackendError):
    """Request exceeded the configured timeout after all retries."""


class CacheMiss(BackendError):
    def __init__(self, key: str):
        super().__init__(f"no cached completion for key {key}")
        self.key = key


class UnknownPrompt(BackendError):
    def __init__(self, text: str):
        preview = text if len(text) <= 80 else text[:77] + "..."
        super().__init__(f"scripted answers have no mapping for prompt: {preview!r}")


class DispatchIncomplete(EngineError):
    def __init__(self, missing: list[int]):
        super().__init__(f"batch completion missing items {missing}")
        self.missing = missing


# --- eval ---

class NoGroundTruth(EngineError):
    def __init__(self, prompt_id: str):
        super().__init__(f"prompt {prompt_id!r} carries no ground truth")
        self.prompt_id = prompt_id


class MissingAnswer(EngineError):
    def __init__(self, prompt_id: str):
        super().__init__(f"no answer recorded for prompt {prompt_id!r}")
        self.prompt_id = prompt_id


class DivisionByZero(EngineError, ZeroDivisionError):
    """A ratio metric received a zero denominator."""


class RankDeficient(EngineError):
    """Cost-model fit received a collinear or constant design matrix."""
