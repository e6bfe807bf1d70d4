"""Exception hierarchy shared across the pipeline."""


class ConceptForgeError(Exception):
    """Base class for all pipeline errors."""


# --- ontology ---

class ParseError(ConceptForgeError):
    """Ontology document is malformed or structurally empty."""


class DanglingReference(ConceptForgeError):
    """An id is referenced but never declared."""


class DuplicateName(ConceptForgeError):
    """A display name violates a uniqueness constraint."""


class UnknownConcept(ConceptForgeError):
    pass


class UnknownAffordance(ConceptForgeError):
    pass


# --- metrics ---

class MissingEmbedding(ConceptForgeError):
    """A concept name has no vector in the embedding store."""


class EmptyConceptSet(ConceptForgeError):
    """An affordance is attached to no concept, so Eq-style averaging is undefined."""


class EmbeddingFormatError(ConceptForgeError):
    """Embedding file violates the header/record schema or norm contract."""


class CacheMismatch(ConceptForgeError):
    """A proximity cache was built under a different distance configuration."""


# --- sampler ---

class InsufficientPairs(ConceptForgeError):
    """Not enough candidate pairs to satisfy the requested draw."""


# --- datagen / clients ---

class NoCaptionsFound(ConceptForgeError):
    """A caption response produced zero usable segments."""


class ClientError(ConceptForgeError):
    """Base class for service-client failures."""


class ScorerUnavailable(ClientError):
    pass


class JudgeUnavailable(ClientError):
    pass


class FixtureMissing(ClientError):
    """Recorded-fixture client has no response for this request hash."""


# --- trainer ---

class DegenerateStep(ConceptForgeError):
    """Cumulative signal coefficient too small to invert the noising step."""


class NonFiniteLoss(ConceptForgeError):
    """Training produced inf/nan; carries the offending step index."""

    def __init__(self, message: str, step: int):
        super().__init__(message)
        self.step = step


# --- evalharness ---

class NotJson(ConceptForgeError):
    """No parseable JSON object found in a judge reply."""

    def __init__(self, message: str, raw: str = ""):
        super().__init__(message)
        self.raw = raw


class MissingKey(ConceptForgeError):
    """Judge reply JSON lacks one of the four metric keys."""

    def __init__(self, message: str, raw: str = ""):
        super().__init__(message)
        self.raw = raw


class OutOfRange(ConceptForgeError):
    """Judge score outside the 1..5 scale, or a bad relative choice."""

    def __init__(self, message: str, raw: str = ""):
        super().__init__(message)
        self.raw = raw


class EmptyInput(ConceptForgeError):
    """An aggregate was requested over zero records."""
