"""Exception hierarchy shared by all modules."""


class AsrFe2Error(Exception):
    """Base class for every error raised by this package."""


class ParameterError(AsrFe2Error, ValueError):
    """Invalid input parameter or configuration value."""


class PlacementError(AsrFe2Error):
    """Aggregate placement gave up before all circles were placed.

    The circles placed so far and the area fraction they reach are kept so the
    caller can accept the partial packing or retry with another seed.
    """

    def __init__(self, message, achieved_fraction, circles):
        super().__init__(message)
        self.achieved_fraction = achieved_fraction
        self.circles = circles


class MeshError(AsrFe2Error):
    pass


class PairingError(AsrFe2Error):
    """Opposite RVE edges do not carry matching nodes."""


class ConstitutiveError(AsrFe2Error):
    pass


class SingularityError(AsrFe2Error):
    """Factorization of a stiffness matrix failed."""

    def __init__(self, message, element=None):
        super().__init__(message)
        self.element = element


class NonConvergenceError(AsrFe2Error):
    """An iteration cap was exceeded (SLA passes or macro iterations)."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class StiffnessError(AsrFe2Error):
    """A virtual test could not produce an effective stiffness."""
