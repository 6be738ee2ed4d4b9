"""Exception and warning classes shared across the package."""


class FracSPDEError(Exception):
    """Base class for all errors raised by fracspde."""


class SeriesConvergenceError(FracSPDEError, ArithmeticError):
    """A power series did not reach tolerance within the allowed number of terms."""

    def __init__(self, message, partial_sum=None, last_term=None, nterms=None):
        super().__init__(message)
        self.partial_sum = partial_sum
        self.last_term = last_term
        self.nterms = nterms


class QuadratureError(FracSPDEError, ArithmeticError):
    pass


class GridError(FracSPDEError, ValueError):
    """The spatial or temporal grid cannot support the requested computation."""


class CertificateError(FracSPDEError):
    pass


class NumericalError(FracSPDEError, FloatingPointError):
    """A simulated field became non-finite."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class BoundNotAsserted(FracSPDEError, ValueError):
    """The requested envelope is outside the parameter region where it is claimed."""


class GrowthDivergenceError(FracSPDEError, ValueError):
    """A coefficient's linear-growth ratio keeps increasing along the scan."""


class ConfigError(FracSPDEError, ValueError):
    pass


class AliasingWarning(UserWarning):
    """The kernel symbol is not negligible at the Nyquist wavenumber."""


class GridWarning(UserWarning):
    """The time step makes a single noise increment's variance implausibly large."""
