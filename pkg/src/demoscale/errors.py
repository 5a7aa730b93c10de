"""Exception types shared across the pipeline."""


class DemoScaleError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(DemoScaleError):
    """Data violates a structural invariant (shapes, limits, identifiers)."""


class FormatError(ValidationError):
    """A serialized file could not be parsed."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ReachabilityError(DemoScaleError):
    """Target lies outside the arm's reachable annulus."""


class IKConvergenceError(DemoScaleError):
    """Inverse kinematics did not converge within the iteration budget."""

    def __init__(self, message: str, best_residual: float):
        self.best_residual = best_residual
        super().__init__(f"{message} (best residual {best_residual:.3e} m)")


class GenerationError(DemoScaleError):
    """A candidate trajectory could not be synthesized."""


class ConfigError(DemoScaleError):
    """Configuration values are inconsistent or out of range."""


class MissingArtifactError(DemoScaleError):
    """A pipeline stage requires a file that an earlier stage has not produced."""

    def __init__(self, path, hint: str):
        self.path = str(path)
        super().__init__(f"missing artifact {self.path!s}: {hint}")
