"""Exception hierarchy shared by the solver and reserving modules."""


class LaadError(Exception):
    """Base class for all errors raised by this package."""


class InvalidArgumentError(LaadError, ValueError):
    pass


class DomainError(LaadError, ValueError):
    """A quantity is undefined for the given arguments (e.g. complex root)."""


class DegenerateColumnError(LaadError, ValueError):
    def __init__(self, column):
        super().__init__(f"column {column!r} has zero Euclidean norm")
        self.column = column


class RankDeficiencyError(LaadError, ValueError):
    def __init__(self, dependent_columns):
        cols = ", ".join(map(str, dependent_columns))
        super().__init__(f"design is rank deficient; dependent columns: {cols}")
        self.dependent_columns = list(dependent_columns)


class NumericalFailureError(LaadError, ArithmeticError):
    def __init__(self, sweep, message="non-finite value encountered"):
        super().__init__(f"{message} (sweep {sweep})")
        self.sweep = sweep


class DataError(LaadError, ValueError):
    """Malformed or inconsistent input data (triangles, CSV files)."""


class InvalidStateError(LaadError, RuntimeError):
    pass


class BootstrapError(LaadError, RuntimeError):
    pass
