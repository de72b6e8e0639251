class NumericalError(ArithmeticError):
    """A linear-algebra step failed or produced an inconsistent result."""


class SearchFailure(RuntimeError):
    pass


class OptimizationFailure(RuntimeError):
    pass


class DegeneracyError(NumericalError):
    def __init__(self, message: str, condition_number: float):
        super().__init__(f"{message} (condition number {condition_number:.3e})")
        self.condition_number = condition_number


class InfeasibleStateError(ValueError):
    """The requested state is not a valid (positive semidefinite) density matrix."""

    def __init__(self, message: str, min_eigenvalue: float, shrink_factor: float | None = None):
        extra = f"; scale higher-order entries by <= {shrink_factor:.6g} to restore positivity" if shrink_factor is not None else ""
        super().__init__(f"{message} (min eigenvalue {min_eigenvalue:.3e}){extra}")
        self.min_eigenvalue = min_eigenvalue
        self.shrink_factor = shrink_factor


class UnsolvableSystemError(NumericalError):
    """A linear system has no solution to the requested accuracy."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual
