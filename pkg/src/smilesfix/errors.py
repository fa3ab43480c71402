"""Exception hierarchy shared across the package."""


class SmilesFixError(Exception):
    """Base class for all package errors."""


# --- SMILES layer ---------------------------------------------------------

class LengthExceeded(SmilesFixError):
    def __init__(self, length: int, limit: int):
        super().__init__(f"{length} content tokens exceeds limit {limit}")
        self.length = length
        self.limit = limit


class ContainsUnknown(SmilesFixError):
    def __init__(self, position: int):
        super().__init__(f"unknown token at position {position}")
        self.position = position


class SmilesSyntaxError(SmilesFixError):
    """Raised by the parser. ``kind`` is one of syntax/branch/ring_closure/tokenization."""

    def __init__(self, message: str, position: int | None, kind: str = "syntax"):
        super().__init__(f"{message} (token {position})" if position is not None else message)
        self.position = position
        self.kind = kind


class KekulizationFailure(SmilesFixError):
    def __init__(self, message: str, atom: int | None = None):
        super().__init__(message)
        self.atom = atom


class InvalidGraph(SmilesFixError):
    pass


# --- metrics ---------------------------------------------------------------

class WidthMismatch(SmilesFixError):
    pass


class EmptySet(SmilesFixError):
    pass


class DimMismatch(SmilesFixError):
    pass


class NonFiniteInput(SmilesFixError):
    pass


class DegenerateData(SmilesFixError):
    pass


class BadBandwidth(SmilesFixError):
    pass


# --- engine / training -----------------------------------------------------

class IdOutOfRange(SmilesFixError):
    pass


class ShapeMismatch(SmilesFixError):
    pass


class NonPositiveSigma(SmilesFixError):
    pass


class StepOutOfRange(SmilesFixError):
    pass


class NonFiniteLoss(SmilesFixError):
    pass


class CheckpointError(SmilesFixError):
    pass


class NoEpochPassedGate(SmilesFixError):
    pass


class InputTooLong(SmilesFixError):
    pass


class EmptyInput(SmilesFixError):
    pass


# --- datasets / cli ---------------------------------------------------------

class EmptyCorpus(SmilesFixError):
    pass


class InsufficientScaffoldDiversity(SmilesFixError):
    pass


class CorruptionExhausted(SmilesFixError):
    pass


class SchemaError(SmilesFixError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


class MissingArtifact(SmilesFixError):
    def __init__(self, path, stage: str):
        super().__init__(f"missing prerequisite for {stage}: {path}")
        self.path = path
        self.stage = stage


class ConfigError(SmilesFixError):
    pass
