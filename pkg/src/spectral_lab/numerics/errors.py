class EigenConvergenceError(RuntimeError):
    """An iterative eigensolver stopped before meeting its tolerance."""

    def __init__(self, message, index=None, converged=None):
        super().__init__(message)
        self.index = index
        self.converged = converged


class NotPositiveDefiniteError(ValueError):
    """Cholesky factorization met a non-positive pivot."""

    def __init__(self, message, pivot):
        super().__init__(message)
        self.pivot = pivot


class LanczosBreakdownError(RuntimeError):
    pass
