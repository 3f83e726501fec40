"""Exception types shared across the package."""


class ParameterError(ValueError):
    """An argument violates a documented precondition."""


class FormatError(ValueError):
    """A file does not conform to its declared format.

    ``line`` carries the 1-based offending line number when known.
    """

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DegeneracyError(RuntimeError):
    """A statistic is undefined because a permutation-null variance
    (or a covariance-matrix determinant) vanishes.

    Covers both a degenerate kernel (zero median bandwidth) and the
    scan-statistic invertibility conditions; ``t`` and ``condition``
    identify the failing time index and condition when applicable.
    """

    def __init__(self, message: str, t: int | None = None, condition: str | None = None):
        super().__init__(message)
        self.t = t
        self.condition = condition
