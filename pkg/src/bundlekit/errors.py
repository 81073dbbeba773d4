"""Exception taxonomy shared by all bundlekit modules."""


class BundleKitError(Exception):
    """Base class for every error raised by this package."""


class InputDomainError(BundleKitError, ValueError):
    """An argument is outside the documented domain (wrong shape, non-finite, ...)."""


class OracleFailureError(BundleKitError):
    """A function oracle produced a non-finite value or gradient."""


class ConfigError(BundleKitError):
    """A problem descriptor or experiment config could not be resolved."""

    def __init__(self, message, line_no=None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class NumericError(BundleKitError):
    """A numerical subroutine (linear solve, factorization) failed."""


class QPNonconvergenceError(NumericError):
    """The simplex-QP solver hit its iteration ceiling above tolerance."""

    def __init__(self, residual, iterations, tol):
        super().__init__(
            f"simplex QP did not converge: residual {residual:.3e} > tol {tol:.3e} "
            f"after {iterations} iterations"
        )
        self.residual = residual
        self.iterations = iterations
        self.tol = tol
