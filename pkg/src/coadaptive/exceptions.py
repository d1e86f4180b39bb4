"""Exception and warning types raised across the package."""


class DimensionMismatchError(ValueError):
    """Array shapes disagree (e.g. len(y) != n_samples)."""


class IndexOutOfRangeError(IndexError):
    """An index set refers to a column outside {0, ..., p-1}."""


class ConstantColumnWarning(UserWarning):
    """A zero-variance column was kept, flagged and excluded from fitting."""


class AllExcludedError(ValueError):
    """Every coordinate carries an infinite penalty weight."""


class NonFiniteError(FloatingPointError):
    """The objective became non-finite during optimisation."""


class NonConvergenceError(RuntimeError):
    """Solver hit ``max_iter`` before the KKT residual dropped below ``tol``.

    The best iterate is available as ``result``.
    """

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class SingularGramError(ValueError):
    """Restricted Gram matrix is too ill-conditioned to invert."""

    def __init__(self, message, support=None, rcond=None):
        super().__init__(message)
        self.support = support
        self.rcond = rcond


class SchemeGroupMismatchError(ValueError):
    """Weight scheme cannot be used with the given group structure."""


class TooLargeForExactError(ValueError):
    """Exact restricted-eigenvalue enumeration was requested for p > 12."""


class SpecInvalidError(ValueError):
    """Simulation scenario parameters are inconsistent."""
