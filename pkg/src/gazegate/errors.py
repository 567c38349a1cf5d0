"""Exception hierarchy shared by all gazegate modules."""

from __future__ import annotations


class GazeGateError(Exception):
    """Base class for domain errors (CLI maps these to exit code 1)."""


# gaze_core
class NonMonotoneTimestamps(GazeGateError, ValueError):
    def __init__(self, msg: str, line: int | None = None) -> None:
        super().__init__(msg if line is None else f"line {line}: {msg}")
        self.line = line


class ZeroTimeGap(NonMonotoneTimestamps):
    pass


class DomainError(GazeGateError, ValueError):
    def __init__(self, msg: str, line: int | None = None) -> None:
        super().__init__(msg if line is None else f"line {line}: {msg}")
        self.line = line


class TooShort(GazeGateError, ValueError):
    pass


class UnlabeledSamples(GazeGateError, ValueError):
    pass


# privacy
class InvalidFactor(GazeGateError, ValueError):
    pass


class InvalidMechanism(GazeGateError, ValueError):
    pass


# biometric
class KindMismatch(GazeGateError, ValueError):
    pass


class DegenerateEvent(GazeGateError, ValueError):
    pass


class TooFewVectors(GazeGateError, ValueError):
    pass


class SubjectTooSparse(GazeGateError, ValueError):
    def __init__(self, subject_id, have: int, need: int) -> None:
        super().__init__(f"subject {subject_id!r} has {have} feature vectors, needs >= {need}")
        self.subject_id = subject_id


class DimensionMismatch(GazeGateError, ValueError):
    pass


class NonFinite(GazeGateError, ValueError):
    pass


class UntrainedNetwork(GazeGateError, RuntimeError):
    pass


class NoEvents(GazeGateError, ValueError):
    pass


class ClassMismatch(GazeGateError, ValueError):
    pass


class ModelFormatError(GazeGateError, ValueError):
    pass


# evaluation
class TooFewStimuli(GazeGateError, ValueError):
    pass


class EmptyInput(GazeGateError, ValueError):
    pass


class ShapeMismatch(GazeGateError, ValueError):
    pass


class IndexMismatch(GazeGateError, ValueError):
    pass


class InvalidAoi(GazeGateError, ValueError):
    code = "INVALID_AOI"


# gatekeeper
class PolicyDenied(GazeGateError, PermissionError):
    code = "POLICY_DENIED"


class UnknownFixation(GazeGateError, KeyError):
    code = "UNKNOWN_FIXATION"

    def __str__(self) -> str:
        return Exception.__str__(self)


class NoData(GazeGateError, LookupError):
    code = "NO_DATA"


class SourceNotFound(GazeGateError, LookupError):
    pass


class BindFailure(GazeGateError, OSError):
    pass


# data_io / synth
class ParseError(GazeGateError, ValueError):
    def __init__(self, msg: str, line: int | None = None) -> None:
        super().__init__(msg if line is None else f"line {line}: {msg}")
        self.line = line


class ManifestError(GazeGateError, ValueError):
    def __init__(self, violations: list[str]) -> None:
        super().__init__("invalid manifest:\n  " + "\n  ".join(violations))
        self.violations = list(violations)


class InvalidConfig(GazeGateError, ValueError):
    pass
