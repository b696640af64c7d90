"""Exception types shared across the simulator."""


class PMSimError(Exception):
    """Base class for all simulator errors."""


class DimensionError(PMSimError, ValueError):
    """Operands live on incompatible Hilbert spaces."""


class OrthogonalBranchError(PMSimError, ArithmeticError):
    """A projection selected a branch with (numerically) zero probability."""


class NumericalGuardError(PMSimError, ArithmeticError):
    """A numerical guard tripped: overflow, grid boundary leakage or Fock truncation."""


class ConfigError(PMSimError, ValueError):
    """An experiment configuration failed validation."""

    def __init__(self, field, reason):
        self.field = field
        self.reason = reason
        super().__init__(f"{field}: {reason}")
