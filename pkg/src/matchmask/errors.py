"""Exception hierarchy shared by every stage of the design pipeline."""


class MatchMaskError(Exception):
    """Base class; ``stage`` names the pipeline step that failed."""

    stage = "unknown"

    def __init__(self, message, stage=None, diagnostics=None):
        super().__init__(message)
        if stage is not None:
            self.stage = stage
        self.diagnostics = diagnostics or {}


class ParameterError(MatchMaskError, ValueError):
    """Invalid argument (bad grid size, bad length, f(0) != 1, ...)."""


class DomainError(MatchMaskError, ValueError):
    """The operation is undefined for this input (zero polynomial, zero segment, ...)."""


class NumericalError(MatchMaskError, ArithmeticError):
    """A cap was exceeded or a numerical sub-step failed to reach its tolerance."""


class DesignError(MatchMaskError):
    """The construction could not be completed (normalization, K0 cap, ...)."""
