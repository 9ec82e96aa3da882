"""Exception hierarchy shared across the package."""


class DialectIdError(Exception):
    """Base class for all errors raised by this package."""


class InvalidShape(DialectIdError):
    """Tensor shapes are inconsistent with the requested operation."""


class InvalidAxis(DialectIdError):
    """An axis argument is out of range for the operand."""


class NotScalar(DialectIdError):
    """backward() was asked to seed from a non-scalar value."""


class FilterbankDegenerate(DialectIdError):
    """A mel filter row has no positive weight at the given FFT resolution."""


class TooShort(DialectIdError):
    """Waveform shorter than a single analysis frame."""


class InputTooShort(DialectIdError):
    """Feature matrix has too few frames for the convolutional trunk."""


class InfeasibleLabel(DialectIdError):
    """Label sequence cannot be emitted in the available lattice frames."""


class OracleTooLarge(DialectIdError):
    """Brute-force path enumeration would exceed the configured budget."""


class IncompatibleCheckpoint(DialectIdError):
    """Checkpoint metadata does not match the requested configuration."""


class NumericalFault(DialectIdError):
    """Non-finite values encountered during optimization."""


class DataFault(DialectIdError):
    """Dataset records are inconsistent (e.g. alignment length mismatch)."""


class ParseFault(DialectIdError):
    """A manifest line could not be parsed."""

    def __init__(self, message, line_no=None):
        super().__init__(message)
        self.line_no = line_no


class DuplicateId(DialectIdError):
    """Two manifest records share an utterance id."""


class IoFault(DialectIdError):
    """Filesystem operation failed."""


class EmptyTestSet(DialectIdError):
    """Evaluation was requested on an empty manifest."""
