"""Exception types shared across the library."""


class EstimationError(Exception):
    """Base class for numerical failures raised by the estimators and kernels."""


class NotPositiveDefinite(EstimationError):
    """A matrix required to be positive definite failed its pivot check.

    For the recursive estimators this means the regularized information matrix
    lost positive definiteness, i.e. regularization faded faster than data
    accumulated. The failing step index, when known, is stored in ``step``.
    """

    def __init__(self, message: str = "matrix is not positive definite", step: int | None = None):
        if step is not None:
            message = f"{message} (at step {step})"
        super().__init__(message)
        self.step = step


class SingularInnerMatrix(EstimationError):
    """The small inner matrix of a matrix-inversion-lemma update is singular."""


class NoConvergence(EstimationError):
    """The symmetric eigensolver failed to converge."""


class RankNotAttained(EstimationError):
    """An operation requiring a positive-definite accumulated data sum was
    called before the data attained full rank."""


class DimensionMismatch(ValueError):
    """Operands have inconsistent shapes."""


class ConfigError(ValueError):
    """An experiment or CLI configuration is invalid."""
