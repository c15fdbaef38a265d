"""Grid ingestion: binary container, CSV fixtures, units, trimming,
monthly aggregation and first-order conservative regridding."""

from __future__ import annotations

import datetime as dt
import io
import struct
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import CorruptionError, DomainError, FormatError, ValidationError
from .grid import (
    Grid3D,
    GridAxes,
    format_month,
    month_index,
    parse_month,
    year_month,
)

MAGIC = b"STXG"
VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_DTYPE_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}
_QNAN = {0: np.uint32(0x7FC00000), 1: np.uint64(0x7FF8000000000000)}

# ----------------------------------------------------------------------------
# Binary container
# ----------------------------------------------------------------------------


def _pack_text(s: str) -> bytes:
    raw = s.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise ValidationError("text field longer than 65535 bytes")
    return struct.pack("<H", len(raw)) + raw


def write_grid(g: Grid3D) -> bytes:
    """Serialize ``g`` to the STXG byte layout.

    NaNs are rewritten to the canonical quiet NaN so the output depends only
    on the grid contents.
    """
    code = _DTYPE_CODES[g.values.dtype]
    nt, ny, nx = g.shape
    out = io.BytesIO()
    out.write(MAGIC)
    out.write(struct.pack("<IIIIB", VERSION, nt, ny, nx, code))
    out.write(_pack_text(g.units))
    out.write(_pack_text(g.variable_name))
    ax = g.axes
    out.write(np.asarray(ax.time, dtype="<i4").tobytes())
    for arr in (ax.lat_edges, ax.lat_centers, ax.lon_edges, ax.lon_centers):
        out.write(np.asarray(arr, dtype="<f8").tobytes())
    data = np.ascontiguousarray(g.values, dtype=_DTYPES[code])
    bits = data.view(np.uint32 if code == 0 else np.uint64).copy()
    bits[np.isnan(data)] = _QNAN[code]
    out.write(bits.tobytes())
    return out.getvalue()


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = memoryview(buf)
        self.pos = 0

    def take(self, n: int) -> memoryview:
        if self.pos + n > len(self.buf):
            raise CorruptionError(
                f"payload truncated: need {n} bytes at offset {self.pos}, "
                f"have {len(self.buf) - self.pos}"
            )
        chunk = self.buf[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def text(self) -> str:
        (n,) = self.unpack("<H")
        try:
            return bytes(self.take(n)).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError("text field is not valid UTF-8") from exc

    def array(self, dtype: str, count: int) -> np.ndarray:
        dt_ = np.dtype(dtype)
        return np.frombuffer(self.take(dt_.itemsize * count), dtype=dt_).copy()


def read_grid(data: bytes) -> Grid3D:
    """Parse an STXG byte stream."""
    r = _Reader(data)
    if len(data) < 4 or bytes(r.take(4)) != MAGIC:
        raise FormatError("bad magic: not an STXG grid")
    version, nt, ny, nx, code = r.unpack("<IIIIB")
    if version != VERSION:
        raise FormatError(f"unsupported STXG version {version}")
    if code not in _DTYPES:
        raise FormatError(f"unknown dtype code {code}")
    units = r.text()
    name = r.text()
    time = r.array("<i4", nt)
    lat_edges = r.array("<f8", ny + 1)
    lat_centers = r.array("<f8", ny)
    lon_edges = r.array("<f8", nx + 1)
    lon_centers = r.array("<f8", nx)
    values = r.array(_DTYPES[code].str, nt * ny * nx)
    if r.pos != len(data):
        raise CorruptionError(
            f"{len(data) - r.pos} trailing bytes after declared payload"
        )
    axes = GridAxes(time, lat_edges, lat_centers, lon_edges, lon_centers)
    native = np.float32 if code == 0 else np.float64
    return Grid3D(name, units, axes, values.astype(native).reshape(nt, ny, nx))


def load_grid(path: str | Path) -> Grid3D:
    """Read a grid from an ``.stxg`` or ``.csv`` file."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        return read_csv_grid(path.read_text(encoding="utf-8"))
    return read_grid(path.read_bytes())


def save_grid(g: Grid3D, path: str | Path) -> None:
    path = Path(path)
    if path.suffix.lower() == ".csv":
        path.write_text(write_csv_grid(g), encoding="utf-8")
    else:
        path.write_bytes(write_grid(g))


# ----------------------------------------------------------------------------
# CSV fixtures
# ----------------------------------------------------------------------------

_REQUIRED_HEADERS = ("var", "units", "lat_edges", "lon_edges", "t0")


def _floats(text: str, what: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.split(",") if v.strip()])
    except ValueError as exc:
        raise ValidationError(f"malformed {what}: {text!r}") from exc


def read_csv_grid(text: str) -> Grid3D:
    """Parse the small-fixture CSV format.

    Header lines ``# key=value`` give ``var``, ``units``, ``lat_edges``,
    ``lon_edges`` and ``t0`` (``YYYY-MM``); each data row holds the lon values
    of one ``(time, lat)`` pair, time-major. ``NA`` marks a missing value.
    """
    headers: dict[str, str] = {}
    rows: list[list[float]] = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, sep, value = line[1:].partition("=")
            if sep:
                headers[key.strip()] = value.strip()
            continue
        row = []
        for tok in line.split(","):
            tok = tok.strip()
            if tok.upper() in ("NA", "NAN", ""):
                row.append(np.nan)
                continue
            try:
                row.append(float(tok))
            except ValueError as exc:
                raise ValidationError(f"line {lineno}: bad value {tok!r}") from exc
        rows.append(row)
    missing = [k for k in _REQUIRED_HEADERS if k not in headers]
    if missing:
        raise ValidationError(f"CSV grid missing header(s): {', '.join(missing)}")
    lat_edges = _floats(headers["lat_edges"], "lat_edges")
    lon_edges = _floats(headers["lon_edges"], "lon_edges")
    ny, nx = lat_edges.size - 1, lon_edges.size - 1
    if ny < 1 or nx < 1:
        raise ValidationError("CSV grid needs at least one lat and one lon cell")
    if any(len(r) != nx for r in rows):
        raise ValidationError(f"every data row must have {nx} values")
    if len(rows) % ny:
        raise ValidationError(f"row count {len(rows)} is not a multiple of nlat={ny}")
    nt = len(rows) // ny
    t0 = parse_month(headers["t0"])
    axes = GridAxes.from_edges(np.arange(t0, t0 + nt), lat_edges, lon_edges)
    values = np.array(rows, dtype=np.float64).reshape(nt, ny, nx)
    return Grid3D(headers["var"], headers["units"], axes, values)


def write_csv_grid(g: Grid3D) -> str:
    """Inverse of :func:`read_csv_grid` (centers are not stored)."""
    ax = g.axes
    lines = [
        f"# var={g.variable_name}",
        f"# units={g.units}",
        "# lat_edges=" + ",".join(repr(float(v)) for v in ax.lat_edges),
        "# lon_edges=" + ",".join(repr(float(v)) for v in ax.lon_edges),
        f"# t0={format_month(int(ax.time[0])) if ax.time.size else '2001-01'}",
    ]
    for plane in g.values:
        for row in plane:
            lines.append(",".join("NA" if np.isnan(v) else repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


# ----------------------------------------------------------------------------
# Units
# ----------------------------------------------------------------------------

# quantity -> {unit: factor to the quantity's base unit}
_UNIT_TABLE: dict[str, dict[str, Fraction]] = {
    "carbon_flux": {
        "kg m-2 s-1": Fraction(1),
        "gC m-2 day-1": Fraction(1, 1000 * 86_400),
    },
    "temperature": {"K": Fraction(1), "degC": Fraction(1)},
    "precip": {
        "kg m-2 s-1 (pr)": Fraction(1),
        # 1 mm of water = 1 kg m-2; a month is taken as 365.25/12 days
        "mm month-1": Fraction(12 * 100, 36525 * 86_400),
    },
}
_OFFSETS = {("degC", "K"): 273.15, ("K", "degC"): -273.15}

CARBON_FLUX = "kg m-2 s-1"


def unit_quantity(units: str) -> str:
    for quantity, table in _UNIT_TABLE.items():
        if units in table:
            return quantity
    raise DomainError(f"unrecognized unit {units!r}")


def convert_units(g: Grid3D, target: str) -> Grid3D:
    """Rescale ``g`` into ``target`` units."""
    src_q = unit_quantity(g.units)
    dst_q = unit_quantity(target)
    if src_q != dst_q:
        raise DomainError(f"cannot convert {g.units!r} to {target!r}")
    if g.units == target:
        return g
    table = _UNIT_TABLE[src_q]
    factor = table[g.units] / table[target]
    values = g.values.astype(np.float64)
    if factor != 1:
        values = values * (factor.numerator / factor.denominator)
    offset = _OFFSETS.get((g.units, target))
    if offset is not None:
        values = values + offset
    return g.with_values(values.astype(g.values.dtype), units=target)


# ----------------------------------------------------------------------------
# Time handling
# ----------------------------------------------------------------------------

def subset_time(g: Grid3D, start: int, end: int) -> Grid3D:
    """Keep months ``start..end`` inclusive."""
    if end < start:
        raise DomainError(f"end {format_month(end)} precedes start {format_month(start)}")
    t = g.axes.time
    if not t.size or start < t[0] or end > t[-1]:
        raise DomainError(
            f"period {format_month(start)}..{format_month(end)} outside grid time axis"
        )
    i0 = int(start - t[0])
    sl = slice(i0, i0 + (end - start + 1))
    return Grid3D(g.variable_name, g.units, g.axes.subset(sl), g.values[sl])


def _month_start(m: int) -> dt.date:
    y, mo = year_month(m)
    return dt.date(y, mo, 1)


def aggregate_monthly(
    dates: Sequence[dt.date],
    values: np.ndarray,
    lat_edges,
    lon_edges,
    *,
    period_days: int = 8,
    variable_name: str = "gpp",
    units: str = CARBON_FLUX,
) -> Grid3D:
    """Day-weighted monthly means of composite samples.

    Sample ``i`` starting on ``dates[i]`` covers ``period_days`` days, clipped
    at the start of the next sample. Each month receives the mean of the
    samples overlapping it weighted by overlapping days; NaN samples do not
    contribute and months with no coverage are missing.

    Parameters
    ----------
    dates : sequence of datetime.date
        Start dates, strictly increasing.
    values : ndarray, shape (nsamples, nlat, nlon)
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 1:
        values = values[:, None, None]
    if len(dates) != values.shape[0] or not len(dates):
        raise ValidationError("need one value plane per sample date")
    if any(b <= a for a, b in zip(dates, dates[1:])):
        raise ValidationError("sample dates must be strictly increasing")
    ends = []
    for i, d in enumerate(dates):
        end = d + dt.timedelta(days=period_days)
        if i + 1 < len(dates):
            end = min(end, dates[i + 1])
        ends.append(end)
    m0 = month_index(dates[0].year, dates[0].month)
    last = ends[-1] - dt.timedelta(days=1)
    m1 = month_index(last.year, last.month)
    nt = m1 - m0 + 1
    num = np.zeros((nt,) + values.shape[1:])
    den = np.zeros_like(num)
    valid = ~np.isnan(values)
    filled = np.where(valid, values, 0.0)
    for i, (start, end) in enumerate(zip(dates, ends)):
        m = month_index(start.year, start.month)
        while True:
            ms = _month_start(m)
            me = _month_start(m + 1)
            lo, hi = max(start, ms), min(end, me)
            if lo >= hi:
                break
            w = (hi - lo).days
            num[m - m0] += w * filled[i]
            den[m - m0] += w * valid[i]
            m += 1
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(den > 0, num / np.where(den > 0, den, 1.0), np.nan)
    axes = GridAxes.from_edges(np.arange(m0, m0 + nt), lat_edges, lon_edges)
    return Grid3D(variable_name, units, axes, out)


# ----------------------------------------------------------------------------
# Conservative regridding
# ----------------------------------------------------------------------------

def _overlap_1d(dst_edges: np.ndarray, src_edges: np.ndarray) -> np.ndarray:
    """Overlap lengths ``W[i, j]`` of dst interval i with src interval j."""
    lo = np.maximum(dst_edges[:-1, None], src_edges[None, :-1])
    hi = np.minimum(dst_edges[1:, None], src_edges[None, 1:])
    return np.clip(hi - lo, 0.0, None)


def lat_overlap_weights(dst_edges, src_edges) -> np.ndarray:
    s_dst = np.sin(np.radians(np.asarray(dst_edges, dtype=np.float64)))
    s_src = np.sin(np.radians(np.asarray(src_edges, dtype=np.float64)))
    return _overlap_1d(s_dst, s_src)


def lon_overlap_weights(dst_edges, src_edges, periodic: bool) -> np.ndarray:
    dst = np.asarray(dst_edges, dtype=np.float64)
    src = np.asarray(src_edges, dtype=np.float64)
    if not periodic:
        return np.radians(_overlap_1d(dst, src))
    w = np.zeros((dst.size - 1, src.size - 1))
    for shift in (-360.0, 0.0, 360.0):
        w += _overlap_1d(dst, src + shift)
    return np.radians(w)


def regrid_conservative(src: Grid3D, lat_edges, lon_edges) -> Grid3D:
    """First-order conservative remap onto new regular lat-lon edges.

    Each destination value is the overlap-area-weighted mean of the
    non-missing source cells it intersects; destination cells with no
    overlap are missing. When the source is longitude-global, overlaps are
    computed modulo 360°.
    """
    dst_axes = GridAxes.from_edges(src.axes.time, lat_edges, lon_edges)
    if (np.array_equal(dst_axes.lat_edges, src.axes.lat_edges)
            and np.array_equal(dst_axes.lon_edges, src.axes.lon_edges)):
        return Grid3D(src.variable_name, src.units, dst_axes, src.values)
    wy = lat_overlap_weights(dst_axes.lat_edges, src.axes.lat_edges)
    wx = lon_overlap_weights(dst_axes.lon_edges, src.axes.lon_edges,
                             periodic=src.axes.is_global_lon)
    vals = src.values.astype(np.float64)
    valid = (~np.isnan(vals)).astype(np.float64)
    filled = np.where(valid > 0, vals, 0.0)
    num = np.einsum("ij,tjk,lk->til", wy, filled, wx, optimize=True)
    den = np.einsum("ij,tjk,lk->til", wy, valid, wx, optimize=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(den > 0, num / np.where(den > 0, den, 1.0), np.nan)
    return Grid3D(src.variable_name, src.units, dst_axes, out.astype(src.values.dtype))


def area_integral(g: Grid3D) -> float:
    """Σ area × value over non-missing voxels (m² × value units)."""
    a = g.axes.areas()
    v = g.values.astype(np.float64)
    return float(np.nansum(v * a[None]))
