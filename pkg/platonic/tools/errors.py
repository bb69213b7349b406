class PlatonicError(Exception):
    """Base class for every error raised by the toolkit."""


class InputValidationError(PlatonicError, ValueError):
    """Bad argument, malformed file, unknown name or failed precondition."""


class SectorMismatchError(InputValidationError):
    """A requested spin sector is not present in a density matrix."""


class ConvergenceError(PlatonicError, RuntimeError):
    """An iterative solver stopped without meeting its tolerance."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}

    def __str__(self):
        base = super().__str__()
        if not self.diagnostics:
            return base
        details = ", ".join(f"{k}={v}" for k, v in self.diagnostics.items())
        return f"{base} ({details})"


class TruncationWarning(UserWarning):
    """Probability weight was dropped by a Fock-space truncation."""
