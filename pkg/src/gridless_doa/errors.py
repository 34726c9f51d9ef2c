"""Exception hierarchy shared by all modules."""


class GridlessDoaError(Exception):
    """Base class for package errors."""


class DomainError(GridlessDoaError, ValueError):
    """An argument lies outside the domain of an operation."""


class ConstructionError(GridlessDoaError):
    """A randomized constructor could not satisfy its constraints."""


class NumericalError(GridlessDoaError, ArithmeticError):
    """A numerical failure such as divergence or a singular system."""


class DivergenceError(NumericalError):
    """An iterative solver produced non-finite values."""


class EstimationError(NumericalError):
    """An estimation stage failed.

    Parameters
    ----------
    stage : str
        Pipeline stage that failed, e.g. ``"apg"`` or ``"select_roots"``.
    message : str
    """

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


class ParseError(GridlessDoaError, ValueError):
    """A data file could not be parsed."""

    def __init__(self, path, line: int | None, message: str):
        where = f"{path}:{line}" if line is not None else str(path)
        super().__init__(f"{where}: {message}")
        self.path = path
        self.line = line


class ConfigError(GridlessDoaError, ValueError):
    """A configuration file or option is invalid."""
