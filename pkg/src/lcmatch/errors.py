"""Exception hierarchy shared by all lcmatch modules."""


class LcmatchError(Exception):
    """Base class for every error raised by lcmatch."""


class DomainError(LcmatchError, ValueError):
    """An input lies outside the domain where an operation is defined."""


class ApproximationDomainError(DomainError):
    """The on-resonance approximation was requested where Zc is not << R."""

    def __init__(self, zc, resistance):
        self.zc = zc
        self.resistance = resistance
        super().__init__(
            f"on-resonance approximation needs Zc < R/5, got Zc={zc:.6g} Ohm, R={resistance:.6g} Ohm"
        )


class NoMatchError(DomainError):
    """No characteristic impedance can match the load to the line."""


class QuadratureError(LcmatchError, ArithmeticError):
    """Adaptive quadrature failed to reach the requested tolerance."""

    def __init__(self, message, achieved):
        self.achieved = achieved
        super().__init__(f"{message} (achieved relative error estimate {achieved:.3g})")


class FitError(LcmatchError):
    """Base class for fitting failures."""


class RankDeficiencyError(FitError):
    """The Jacobian is singular: some parameter combination is not identifiable."""

    def __init__(self, message, combination=None):
        self.combination = combination or {}
        super().__init__(message)


class InitializationError(FitError):
    """Initial parameter guesses could not be derived from the data."""


class ConfigError(LcmatchError, ValueError):
    """Invalid fitting, calibration or scenario configuration."""


class GridFormatError(LcmatchError, ValueError):
    """A grid file does not follow the CSV schema."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ShapeError(LcmatchError, ValueError):
    """Grids that must share axes do not."""
