class SkewKrrError(Exception):
    """Base class for errors raised by skewkrr."""


class InputError(SkewKrrError, ValueError):
    pass


class UnsupportedError(SkewKrrError, ValueError):
    pass


class DegenerateDataError(SkewKrrError, ValueError):
    pass


class PlanError(SkewKrrError, ValueError):
    pass


class NumericalError(SkewKrrError, ArithmeticError):
    """Raised when a regularized system cannot be factorized."""

    def __init__(self, message: str, jitter: float = 0.0):
        super().__init__(f"{message} (jitter={jitter:.3g})")
        self.jitter = jitter


class NodeFitError(SkewKrrError):
    def __init__(self, node: int, cause: Exception):
        super().__init__(f"fit failed on node {node}: {cause}")
        self.node = node
        self.cause = cause
