"""Exception hierarchy shared by the solver modules."""


class PlapsysError(Exception):
    """Base class for every error raised by this package."""


class NonConvergence(PlapsysError):
    """An iterative solve hit its iteration cap.

    Parameters
    ----------
    message : str
        Human readable description, usually naming the stage.
    residual : float
        Last residual (max norm) observed before giving up.
    """

    def __init__(self, message, residual=float("nan")):
        super().__init__(f"{message} (last residual {residual:.3e})")
        self.residual = residual


class DegenerateJacobian(PlapsysError):
    """The Newton linearization is singular and no regularization floor is set."""


class SignViolation(PlapsysError):
    """An iterate that must stay positive lost positivity."""


class FitFailure(PlapsysError):
    """A fitted envelope ratio was non-finite or non-positive."""


class SelectionDiverged(PlapsysError):
    """A doubling search exceeded its cap without certifying its inequalities."""


class EnvelopeViolation(PlapsysError):
    """Sub/supersolution sign check failed.

    Attributes
    ----------
    nodes : dict
        Maps a check name to the list of offending node indices.
    """

    def __init__(self, message, nodes):
        super().__init__(message)
        self.nodes = nodes


class RectangleEscape(PlapsysError):
    """A monotone iterate left the sub/supersolution rectangle."""


class DegenerateRate(PlapsysError):
    """Boundary growth rate u/d collapsed to zero on the strip."""


class ConfigError(PlapsysError):
    """Malformed run configuration; carries the offending line number."""

    def __init__(self, message, line=None):
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)
        self.line = line


class MonotonicityLoss(PlapsysError):
    """A monotone iteration produced a step against its expected direction."""
