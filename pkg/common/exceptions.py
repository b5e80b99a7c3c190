"""Exception hierarchy shared across apps."""


class PoroHDGError(Exception):
    """Base class for every error raised by the solver."""


class ValidationError(PoroHDGError, ValueError):
    """Input failed a ``clean()`` check."""


class ConfigError(PoroHDGError):
    pass


class MeshError(PoroHDGError):
    pass


class QuadratureError(PoroHDGError):
    pass


class AssemblyError(PoroHDGError):
    """Local or global assembly failed; ``cell`` names the element if known."""

    def __init__(self, message, cell=None):
        super().__init__(message)
        self.cell = cell


class SolverError(PoroHDGError):
    """Linear solve broke down; ``residual`` is the relative residual reached."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class GateFailure(PoroHDGError):
    """A configured acceptance gate (rates, property checks) did not pass."""
