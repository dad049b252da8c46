"""
Exception hierarchy for calltopics
Every failure the library raises on purpose derives from CallTopicsError
"""

from typing import Optional


class CallTopicsError(Exception):
    """Base class for all calltopics errors"""


class ConfigError(CallTopicsError):
    """Bad run configuration or command-line usage"""


class ParameterError(CallTopicsError):
    """An operation was called with arguments outside its preconditions"""


class IngestError(CallTopicsError):
    """A transcript file could not be read or parsed"""


class ConflictError(CallTopicsError):
    """A uniqueness rule was violated (doc_id, topic label, seed name)"""


class NotFoundError(CallTopicsError):
    """A referenced topic or document does not exist"""


class DepthError(CallTopicsError):
    """An insertion would exceed the ontology's max_depth"""


class OntologyLoadError(CallTopicsError):
    """An ontology file is malformed or violates a tree invariant"""

    def __init__(self, invariant: str, detail: str = ""):
        self.invariant = invariant
        message = invariant if not detail else f"{invariant}: {detail}"
        super().__init__(message)


class InsufficientDataError(CallTopicsError):
    """Not enough data points for a statistic"""


class ProviderError(CallTopicsError):
    """A chat or embedding backend failed"""

    def __init__(self, message: str, status: Optional[int] = None, retryable: bool = False):
        self.status = status
        self.retryable = retryable
        super().__init__(message)


class UnscriptedPromptError(ProviderError):
    """The mock provider has no rule for a prompt"""

    def __init__(self, message: str):
        super().__init__(message, status=None, retryable=False)


class ResponseParseError(CallTopicsError):
    """An LLM reply did not match the expected JSON contract"""

    def __init__(self, message: str, raw_text: str):
        self.raw_text = raw_text
        super().__init__(message)
