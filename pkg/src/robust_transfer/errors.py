"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class RobustTransferError(Exception):
    exit_code = 3


class InputError(RobustTransferError, ValueError):
    """Invalid arguments or inconsistent shapes passed by the caller."""

    exit_code = 1


class ParseError(RobustTransferError, ValueError):
    """A model or dataset file could not be decoded."""

    exit_code = 2


class NumericError(RobustTransferError, ArithmeticError):
    exit_code = 3


class SpectralNormError(NumericError):
    def __init__(self, message, last_estimate, residual, vector=None):
        super().__init__(message)
        self.last_estimate = last_estimate
        self.residual = residual
        self.vector = vector


class DegenerateMarginError(NumericError):
    """Two head rows coincide while their logits differ (bias-only separation)."""


class TheoryViolation(RobustTransferError):
    """A proven inequality failed on computed values; indicates a bug upstream."""

    exit_code = 4

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or []
