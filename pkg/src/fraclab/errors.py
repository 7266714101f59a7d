class ConfigurationError(ValueError):
    """Invalid experiment, kernel or exponent configuration."""


class RegimeError(ValueError):
    """Exponents or orders outside the regime an estimate is stated for."""


class SolverError(RuntimeError):
    """Krylov solve failed to reach the requested tolerance."""

    def __init__(self, message, residual_history=()):
        super().__init__(message)
        self.residual_history = list(residual_history)


class BufferTooShortError(RuntimeError):
    """The time circle is too short for the zero-initial-value argument."""


class EmbeddingInfeasibleError(RegimeError):
    """Sobolev-type embedding requested outside ``s p < n``."""
