"""Exception types shared across the package."""


class ContractError(ValueError):
    """Operands violate a shape or range precondition."""


class DivergenceError(RuntimeError):
    """A learning episode produced non-finite states or weights."""

    def __init__(self, message, step=None):
        super().__init__(message if step is None else f"{message} (step {step})")
        self.step = step


class SingularKernelError(ArithmeticError):
    """The control block of a kernel cannot be inverted without regularization."""


class ExcitationError(RuntimeError):
    """Regression data lack the rank needed to identify a kernel."""

    def __init__(self, message, step=None):
        super().__init__(message if step is None else f"{message} (step {step})")
        self.step = step


class AdmissibilityError(ValueError):
    """A feedback gain does not stabilize the plant."""


class ConvergenceError(RuntimeError):
    """An iterative solver hit its iteration limit."""


class ConfigError(ValueError):
    """Invalid scenario configuration; ``errors`` lists every offending field."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))
