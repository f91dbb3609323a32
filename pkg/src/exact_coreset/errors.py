"""Exception hierarchy shared by the library and the command line."""


class CoresetError(Exception):
    """Base class for all errors raised by exact_coreset."""


class InputError(CoresetError, ValueError):
    """Rejected input: non-finite values, bad shapes, malformed files."""


class ArgumentError(CoresetError, ValueError):
    """An argument is outside its admissible range."""


class NoNullSpaceError(CoresetError):
    """The matrix has full column rank, so no null vector exists."""


class DeficientRankError(CoresetError):
    """The matrix has fewer than the requested number of significant directions."""


class NumericalFailure(CoresetError, ArithmeticError):
    """A numerical routine failed to reach its contract."""

    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics

    def __str__(self):
        base = super().__str__()
        if not self.diagnostics:
            return base
        extra = ", ".join(f"{k}={v!r}" for k, v in sorted(self.diagnostics.items()))
        return f"{base} ({extra})"


class SizeError(ArgumentError):
    """A lifted representation would exceed the configured size guard."""


class RecoveryError(CoresetError):
    """A latent component cannot be un-whitened (nonpositive eigenvalue)."""
