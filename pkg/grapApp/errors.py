"""Exception hierarchy shared by the library and the CLI."""

from typing import Optional


class GrapError(Exception):
    """Base class for every error raised by grapApp."""

    exit_code = 1


class ContractViolation(GrapError, ValueError):
    """A precondition on shapes or arguments was not met."""


class NonFiniteError(GrapError, ArithmeticError):
    """A loss or update produced NaN/inf."""

    exit_code = 3

    def __init__(
        self, message: str, loss_index: Optional[int] = None, step: Optional[int] = None
    ):
        self.loss_index = loss_index
        self.step = step
        parts = [message]
        if loss_index is not None:
            parts.append(f"loss_index={loss_index}")
        if step is not None:
            parts.append(f"step={step}")
        super().__init__(" ".join(parts))


class ConvergenceError(GrapError, ArithmeticError):
    """An iterative solver did not reach its tolerance."""


class DegenerateNormError(GrapError, ArithmeticError):
    """The composite gradient norm is too small to normalize by."""


class ConfigError(GrapError):
    exit_code = 2


class NumericalError(NonFiniteError):
    """NaN/inf during a training run; always carries the step index."""


class VerificationError(GrapError):
    exit_code = 4


class FlowError(GrapError):
    """A phase of the tuned flow failed; keeps the exit code of the error behind it."""

    def __init__(self, message: str, exit_code: int = GrapError.exit_code):
        super().__init__(message)
        self.exit_code = exit_code
