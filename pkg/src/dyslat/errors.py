"""Exception types shared across the toolkit."""


class DyslatError(Exception):
    """Base class for all toolkit errors."""


class InputTooShort(DyslatError):
    """Audio clip or spectrogram has too few samples/frames for the operation."""


class BadFrequencyRange(DyslatError):
    """Mel filterbank frequency bounds are invalid."""


class BadMagnitude(DyslatError):
    """Magnitude spectrogram contains negative entries."""


class ShapeMismatch(DyslatError):
    """Operand shapes are incompatible."""


class EmptySequence(DyslatError):
    """An operation received an empty sequence where at least one element is required."""


class BadProbability(DyslatError):
    """Probability parameter outside its valid range."""


class NonFiniteInput(DyslatError):
    """A tensor operation received or produced NaN/Inf values."""


class NumericalDivergence(DyslatError):
    """Training diverged (non-finite gradients or loss).

    Carries the last parameter snapshot taken before the failing step so
    callers can persist it.
    """

    def __init__(self, message, last_good_params=None):
        super().__init__(message)
        self.last_good_params = last_good_params


class ParseError(DyslatError):
    """Malformed manifest or interchange file; message names line and field."""


class IoError(DyslatError):
    """Missing or unreadable file."""


class InsufficientSpeakers(DyslatError):
    """Cross-validation requires at least two distinct speakers."""


class DegenerateInput(DyslatError):
    """Statistic undefined for this input (e.g. zero variance)."""


class IncompleteMushraSet(DyslatError):
    """A (word, listener) group is missing one or more conditions."""


class CheckpointMismatch(DyslatError):
    """Checkpoint config hash does not match the requested model config."""
