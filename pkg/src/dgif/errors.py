"""Exception types raised across the package."""


class DGIFError(Exception):
    """Base class for every error the package raises on bad input."""


class DimensionError(DGIFError, ValueError):
    pass


class ContractError(DGIFError, ValueError):
    """A documented precondition of an operation was violated."""


class SingularMatrixError(DGIFError, ArithmeticError):
    def __init__(self, pivot: int, message: str = ""):
        self.pivot = pivot
        super().__init__(message or f"matrix not positive definite at pivot {pivot}")


class DegenerateVectorError(DGIFError, ArithmeticError):
    pass


class TapeError(DGIFError, RuntimeError):
    pass


class ParseError(DGIFError, ValueError):
    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}: "
        elif where:
            where += " "
        super().__init__(where + message)


class DataError(DGIFError, ValueError):
    pass


class DivergenceError(DGIFError, RuntimeError):
    pass
