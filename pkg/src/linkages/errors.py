"""Exception types shared across the package."""


class LinkagesError(Exception):
    """Base class for package errors."""


class MomentDiverges(LinkagesError):
    """A requested kernel moment does not exist (heavy tail)."""


class QuadratureFailure(LinkagesError):
    """Adaptive quadrature did not reach the requested tolerance."""


class ContractionViolated(LinkagesError):
    """Truncated kernel mass reaches or exceeds the total mass."""


class GridMismatch(LinkagesError):
    """Two grid functions do not share step / origin."""


class GridNotAligned(LinkagesError):
    """Time and age grids are not characteristic-aligned."""


class ResidualTooLarge(LinkagesError):
    """A solved integral equation fails its a-posteriori residual check."""


class StepTooCoarse(LinkagesError):
    """Time step too large relative to the delay scale."""


class TailMassTooLarge(LinkagesError):
    """Age truncation discards non-negligible envelope mass."""


class TableRangeExceeded(LinkagesError):
    """Corrector table queried beyond its stored range without limits."""


class DegenerateMoment(LinkagesError):
    """A required kernel or density moment vanished."""


class DegenerateFit(LinkagesError):
    """Slope fit attempted on unusable data (too few points, zeros)."""


class FloorDominated(LinkagesError):
    """All sweep errors sit at the discretization floor; no rate visible."""


class ConfigError(LinkagesError):
    """Experiment configuration file is invalid."""
