"""Detection, ranking and attribution of spatiotemporal extremes in gridded
carbon-cycle data."""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    ConfigError,
    CorruptionError,
    DomainError,
    FormatError,
    NumericalError,
    StxError,
    ValidationError,
)
from .grid import Grid3D, GridAxes, cell_area, month_index, month_seconds, percentile  # noqa: F401
