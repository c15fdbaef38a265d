"""Grid geometry, calendar and order statistics.

Everything here is a pure function or an immutable container. Volumes are
laid out as ``(time, lat, lon)`` and missing voxels are NaN.
"""

from __future__ import annotations

import calendar
import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import DomainError, ValidationError

EARTH_RADIUS = 6_371_000.0  # m
SECONDS_PER_DAY = 86_400
KG_PER_PG = 1e12
KG_PER_TG = 1e9

_INT32_MIN = -(2**31)
_INT32_MAX = 2**31 - 1


# ----------------------------------------------------------------------------
# Calendar
# ----------------------------------------------------------------------------

def month_index(year: int, month: int) -> int:
    """Encode ``(year, month)`` as ``year * 12 + (month - 1)``."""
    if not 1 <= month <= 12:
        raise DomainError(f"month must be in 1..12, got {month}")
    m = year * 12 + (month - 1)
    if not _INT32_MIN <= m <= _INT32_MAX:
        raise DomainError(f"month index {m} does not fit in int32")
    return m


def year_month(m: int) -> tuple[int, int]:
    """Inverse of :func:`month_index`."""
    year, rem = divmod(int(m), 12)
    return year, rem + 1


def parse_month(text: str) -> int:
    """Parse ``YYYY-MM`` (a trailing ``-DD`` is ignored) into a month index."""
    parts = text.strip().split("-")
    if len(parts) < 2:
        raise DomainError(f"expected YYYY-MM, got {text!r}")
    try:
        return month_index(int(parts[0]), int(parts[1]))
    except ValueError as exc:
        raise DomainError(f"expected YYYY-MM, got {text!r}") from exc


def format_month(m: int) -> str:
    year, month = year_month(m)
    return f"{year:04d}-{month:02d}"


def days_in_month(m: int) -> int:
    year, month = year_month(m)
    return calendar.monthrange(year, month)[1]


def month_seconds(m: int) -> int:
    """Length of month ``m`` in seconds (Gregorian calendar)."""
    return SECONDS_PER_DAY * days_in_month(m)


# ----------------------------------------------------------------------------
# Geometry
# ----------------------------------------------------------------------------

def cell_area(lat_lo: float, lat_hi: float, lon_width: float) -> float:
    """Area in m² of a spherical lat-lon quadrilateral.

    Uses the zone formula ``R² Δλ (sin φ₂ − sin φ₁)`` with the mean Earth
    radius.
    """
    if not (-90.0 <= lat_lo < lat_hi <= 90.0):
        raise DomainError(f"invalid latitude bounds [{lat_lo}, {lat_hi}]")
    if not lon_width > 0:
        raise DomainError(f"longitude width must be positive, got {lon_width}")
    dlon = math.radians(lon_width)
    return EARTH_RADIUS**2 * dlon * (
        math.sin(math.radians(lat_hi)) - math.sin(math.radians(lat_lo))
    )


def cell_areas(lat_edges: np.ndarray, lon_edges: np.ndarray) -> np.ndarray:
    """Area (m²) of every cell of a regular lat-lon grid, shape ``(nlat, nlon)``."""
    lat_edges = np.asarray(lat_edges, dtype=np.float64)
    lon_edges = np.asarray(lon_edges, dtype=np.float64)
    band = np.diff(np.sin(np.radians(lat_edges)))
    width = np.radians(np.diff(lon_edges))
    return EARTH_RADIUS**2 * np.outer(band, width)


# ----------------------------------------------------------------------------
# Order statistics
# ----------------------------------------------------------------------------

def percentile(values: Iterable[float] | np.ndarray, p: float) -> float:
    """Linear-interpolation percentile, ignoring NaN.

    The rank is ``(p / 100) * (n - 1)`` over the sorted sample, i.e. the
    same convention as ``numpy.percentile(method="linear")``.
    """
    if not 0.0 <= p <= 100.0:
        raise DomainError(f"percentile must be in [0, 100], got {p}")
    x = np.asarray(values, dtype=np.float64).ravel()
    x = np.sort(x[~np.isnan(x)])
    n = x.size
    if n == 0:
        raise DomainError("percentile of an empty sample")
    rank = (p / 100.0) * (n - 1)
    lo = int(math.floor(rank))
    hi = min(lo + 1, n - 1)
    frac = rank - lo
    if frac == 0.0:
        return float(x[lo])
    return float(x[lo] + (x[hi] - x[lo]) * frac)


def median(values: Iterable[float] | np.ndarray) -> float:
    return percentile(values, 50.0)


# ----------------------------------------------------------------------------
# Containers
# ----------------------------------------------------------------------------

def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


def _check_edges(name: str, edges: np.ndarray, centers: np.ndarray) -> None:
    if edges.ndim != 1 or centers.ndim != 1:
        raise ValidationError(f"{name} axes must be one-dimensional")
    if edges.size != centers.size + 1:
        raise ValidationError(
            f"{name}_edges has {edges.size} entries, expected {centers.size + 1}"
        )
    if not np.all(np.isfinite(edges)) or not np.all(np.isfinite(centers)):
        raise ValidationError(f"{name} axes contain non-finite values")
    if centers.size and not np.all(np.diff(edges) > 0):
        raise ValidationError(f"{name}_edges must be strictly increasing")
    if not np.all((centers > edges[:-1]) & (centers < edges[1:])):
        raise ValidationError(f"{name} centers must lie strictly inside their edges")


@dataclass(frozen=True, eq=False)
class GridAxes:
    """Time, latitude and longitude axes of a (time, lat, lon) volume."""

    time: np.ndarray
    lat_edges: np.ndarray
    lat_centers: np.ndarray
    lon_edges: np.ndarray
    lon_centers: np.ndarray

    def __post_init__(self):
        time = np.asarray(self.time)
        if time.ndim != 1:
            raise ValidationError("time axis must be one-dimensional")
        if time.size and not np.issubdtype(time.dtype, np.integer):
            if not np.all(time == np.round(time)):
                raise ValidationError("time axis must hold integer month indices")
        time = time.astype(np.int64)
        if time.size and (time.min() < _INT32_MIN or time.max() > _INT32_MAX):
            raise ValidationError("month index outside int32 range")
        if time.size > 1 and not np.all(np.diff(time) == 1):
            raise ValidationError("time axis must be consecutive months without gaps")
        lat_e = np.asarray(self.lat_edges, dtype=np.float64)
        lat_c = np.asarray(self.lat_centers, dtype=np.float64)
        lon_e = np.asarray(self.lon_edges, dtype=np.float64)
        lon_c = np.asarray(self.lon_centers, dtype=np.float64)
        _check_edges("lat", lat_e, lat_c)
        _check_edges("lon", lon_e, lon_c)
        if lat_e[0] < -90.0 or lat_e[-1] > 90.0:
            raise ValidationError("latitude edges must lie within [-90, 90]")
        if lon_e[-1] - lon_e[0] > 360.0 + 1e-9:
            raise ValidationError("longitude span exceeds 360 degrees")
        object.__setattr__(self, "time", _frozen(time.astype(np.int32)))
        object.__setattr__(self, "lat_edges", _frozen(lat_e))
        object.__setattr__(self, "lat_centers", _frozen(lat_c))
        object.__setattr__(self, "lon_edges", _frozen(lon_e))
        object.__setattr__(self, "lon_centers", _frozen(lon_c))

    @classmethod
    def from_edges(cls, time, lat_edges, lon_edges) -> "GridAxes":
        """Build axes with centers at edge midpoints."""
        lat_edges = np.asarray(lat_edges, dtype=np.float64)
        lon_edges = np.asarray(lon_edges, dtype=np.float64)
        return cls(
            time=np.asarray(time),
            lat_edges=lat_edges,
            lat_centers=0.5 * (lat_edges[:-1] + lat_edges[1:]),
            lon_edges=lon_edges,
            lon_centers=0.5 * (lon_edges[:-1] + lon_edges[1:]),
        )

    @classmethod
    def regular(cls, t0: int, ntime: int, dlat: float, dlon: float,
                lat_range=(-90.0, 90.0), lon_range=(0.0, 360.0)) -> "GridAxes":
        """Regular axes with ``dlat`` x ``dlon`` cells starting at month ``t0``."""
        nlat = int(round((lat_range[1] - lat_range[0]) / dlat))
        nlon = int(round((lon_range[1] - lon_range[0]) / dlon))
        return cls.from_edges(
            np.arange(t0, t0 + ntime),
            np.linspace(lat_range[0], lat_range[1], nlat + 1),
            np.linspace(lon_range[0], lon_range[1], nlon + 1),
        )

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.time.size, self.lat_centers.size, self.lon_centers.size)

    @property
    def lon_span(self) -> float:
        return float(self.lon_edges[-1] - self.lon_edges[0])

    @property
    def is_global_lon(self) -> bool:
        return abs(self.lon_span - 360.0) <= 1e-6

    def areas(self) -> np.ndarray:
        """Cell areas in m², shape ``(nlat, nlon)``."""
        return cell_areas(self.lat_edges, self.lon_edges)

    def seconds(self) -> np.ndarray:
        """Length of each time step in seconds."""
        return np.array([month_seconds(int(m)) for m in self.time], dtype=np.float64)

    def same_as(self, other: "GridAxes") -> bool:
        return (
            np.array_equal(self.time, other.time)
            and np.array_equal(self.lat_edges, other.lat_edges)
            and np.array_equal(self.lat_centers, other.lat_centers)
            and np.array_equal(self.lon_edges, other.lon_edges)
            and np.array_equal(self.lon_centers, other.lon_centers)
        )

    def subset(self, it: slice) -> "GridAxes":
        return GridAxes(self.time[it], self.lat_edges, self.lat_centers,
                        self.lon_edges, self.lon_centers)


@dataclass(frozen=True, eq=False)
class Grid3D:
    """A ``(time, lat, lon)`` volume of one physical variable.

    ``values`` is float32 or float64; NaN marks missing voxels.
    """

    variable_name: str
    units: str
    axes: GridAxes
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.dtype not in (np.float32, np.float64):
            v = v.astype(np.float64)
        if v.shape != self.axes.shape:
            raise ValidationError(
                f"values shape {v.shape} does not match axes {self.axes.shape}"
            )
        object.__setattr__(self, "values", _frozen(v))

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.values.shape

    @property
    def time(self) -> np.ndarray:
        return self.axes.time

    @property
    def missing(self) -> np.ndarray:
        return np.isnan(self.values)

    def with_values(self, values: np.ndarray, units: str | None = None,
                    variable_name: str | None = None) -> "Grid3D":
        return Grid3D(
            variable_name=self.variable_name if variable_name is None else variable_name,
            units=self.units if units is None else units,
            axes=self.axes,
            values=values,
        )

    def equals(self, other: "Grid3D") -> bool:
        """Exact equality, treating NaN == NaN."""
        return (
            self.variable_name == other.variable_name
            and self.units == other.units
            and self.values.dtype == other.values.dtype
            and self.axes.same_as(other.axes)
            and np.array_equal(self.values, other.values, equal_nan=True)
        )
