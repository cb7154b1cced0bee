"""Exception hierarchy shared by all modules."""


class LogGasError(Exception):
    """Base class for every error raised by this package."""


class DomainError(LogGasError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class SingularityError(DomainError):
    """Evaluation hit a logarithmic or inverse-square singularity."""


class ContractError(LogGasError, ValueError):
    """A caller violated a documented precondition on units or state."""


class ConstructionError(LogGasError, ValueError):
    """An object could not be built because its invariants fail."""


class UnsupportedPotentialError(LogGasError):
    """The single-interval equilibrium ansatz does not fit the potential."""


class IntegrationError(LogGasError, RuntimeError):
    """A time integrator could not make progress."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class PreconditionError(LogGasError):
    """A numerical precondition (convexity, kernel floors, support) failed."""


class InsufficientDataError(LogGasError, ValueError):
    """Too few samples for the requested estimator."""


class ConfigError(LogGasError, ValueError):
    """Experiment configuration failed schema validation."""

    def __init__(self, message, path=None):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


class PartialResultsError(LogGasError, RuntimeError):
    """Some workers failed; ``salvaged`` lists the task indices that finished."""

    def __init__(self, message, salvaged):
        super().__init__(message)
        self.salvaged = list(salvaged)


class ReproducibilityError(LogGasError):
    """A replayed experiment produced files with different checksums."""

    def __init__(self, message, divergent):
        super().__init__(message)
        self.divergent = list(divergent)
