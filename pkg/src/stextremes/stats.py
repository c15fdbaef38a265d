"""Per-STE carbon integrals, ranking, cumulative shares and spatial maps."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .detect import ExtremeMask, Labeling
from .errors import DomainError
from .grid import KG_PER_PG, KG_PER_TG, Grid3D, GridAxes
from .io import CARBON_FLUX, convert_units, unit_quantity


@dataclass(frozen=True)
class ComponentStats:
    id: int
    rank: int
    voxel_count: int
    carbon_integral: float  # Pg C, negative for losses
    affected_area: float  # m², distinct cells
    voxel_month_area: float  # m², every voxel counted
    duration: int  # months
    start: int  # MonthIndex
    end: int  # MonthIndex
    t_min: int
    t_max: int
    lat_min: int
    lat_max: int
    lon_min: int
    lon_max: int


def _flux_values(anomalies: Grid3D) -> np.ndarray:
    if unit_quantity(anomalies.units) != "carbon_flux":
        raise DomainError(f"anomalies must be a carbon flux, got {anomalies.units!r}")
    return convert_units(anomalies, CARBON_FLUX).values.astype(np.float64)


def voxel_carbon(anomalies: Grid3D) -> np.ndarray:
    """Carbon (kg C) carried by every voxel: anomaly × area × month length."""
    v = _flux_values(anomalies)
    ax = anomalies.axes
    return v * ax.areas()[None] * ax.seconds()[:, None, None]


def _check_axes(a: GridAxes | None, b: GridAxes, shape_a, shape_b) -> None:
    if shape_a != shape_b or (a is not None and not a.same_as(b)):
        raise DomainError("labeling and anomalies do not share axes")


def component_metrics(labeling: Labeling, anomalies: Grid3D) -> list[ComponentStats]:
    """Statistics of every labeled component, in rank order.

    Rank 1 is the largest ``|carbon_integral|``; ties go to the earlier start,
    then the smaller lat index, then the smaller lon index.
    """
    _check_axes(labeling.axes, anomalies.axes, labeling.labels.shape, anomalies.shape)
    k = labeling.n_components
    if k == 0:
        return []
    ax = anomalies.axes
    carbon = voxel_carbon(anomalies)
    lab = labeling.labels
    sel = lab > 0
    ids = lab[sel]
    tt, yy, xx = np.nonzero(sel)
    if np.isnan(carbon[sel]).any():
        raise DomainError("labeled voxels must not be missing in the anomaly grid")
    integral = np.bincount(ids, weights=carbon[sel], minlength=k + 1)[1:] / KG_PER_PG
    areas = ax.areas()
    vm_area = np.bincount(ids, weights=areas[yy, xx], minlength=k + 1)[1:]
    # distinct (component, cell) pairs for the union footprint
    ny, nx = areas.shape
    cell_key = np.unique(ids * (ny * nx) + yy * nx + xx)
    cid, cell = np.divmod(cell_key, ny * nx)
    aff_area = np.bincount(cid, weights=areas.ravel()[cell], minlength=k + 1)[1:]

    def ext(coord, fn, init):
        out = np.full(k + 1, init, dtype=np.int64)
        fn.at(out, ids, coord)
        return out[1:]

    big = np.iinfo(np.int64).max
    t_lo, t_hi = ext(tt, np.minimum, big), ext(tt, np.maximum, -1)
    y_lo, y_hi = ext(yy, np.minimum, big), ext(yy, np.maximum, -1)
    x_lo, x_hi = ext(xx, np.minimum, big), ext(xx, np.maximum, -1)
    order = np.lexsort((np.arange(k), x_lo, y_lo, t_lo, -np.abs(integral)))
    time = ax.time
    out = []
    for rank, i in enumerate(order.tolist(), 1):
        out.append(ComponentStats(
            id=i + 1,
            rank=rank,
            voxel_count=int(labeling.sizes[i]),
            carbon_integral=float(integral[i]),
            affected_area=float(aff_area[i]),
            voxel_month_area=float(vm_area[i]),
            duration=int(t_hi[i] - t_lo[i] + 1),
            start=int(time[t_lo[i]]),
            end=int(time[t_hi[i]]),
            t_min=int(t_lo[i]), t_max=int(t_hi[i]),
            lat_min=int(y_lo[i]), lat_max=int(y_hi[i]),
            lon_min=int(x_lo[i]), lon_max=int(x_hi[i]),
        ))
    return out


def cumulative_curve(stats: list[ComponentStats]) -> tuple[np.ndarray, np.ndarray]:
    """Cumulative |loss| (Pg C) and share for K = 1..len(stats), in rank order."""
    losses = np.abs([s.carbon_integral for s in sorted(stats, key=lambda s: s.rank)])
    cum = np.cumsum(losses)
    total = cum[-1] if cum.size else 0.0
    share = cum / total if total > 0 else np.ones_like(cum)
    if share.size:
        share[-1] = 1.0
    return cum, share


def cumulative_share(stats: list[ComponentStats], k: int) -> float:
    """Fraction of total |loss| held by the ``k`` top-ranked components."""
    if not 1 <= k <= len(stats):
        raise DomainError(f"K must be in 1..{len(stats)}, got {k}")
    return float(cumulative_curve(stats)[1][k - 1])


def spatial_loss_map(mask: ExtremeMask, anomalies: Grid3D) -> np.ndarray:
    """Per-cell integral (Tg C) of the masked anomalies over time."""
    _check_axes(mask.axes, anomalies.axes, mask.shape, anomalies.shape)
    carbon = voxel_carbon(anomalies)
    masked = np.where(np.asarray(mask.values, dtype=bool), carbon, 0.0)
    return masked.sum(axis=0) / KG_PER_TG


def masked_integral(mask, anomalies: Grid3D) -> float:
    """Total carbon (Pg C) of all masked voxels."""
    values = mask.values if isinstance(mask, ExtremeMask) else mask
    carbon = voxel_carbon(anomalies)
    return float(np.sum(carbon[np.asarray(values, dtype=bool)])) / KG_PER_PG


def iav_map(anomalies: Grid3D) -> np.ndarray:
    """Per-cell sample standard deviation of anomalies (NaN where < 2 values)."""
    v = anomalies.values.astype(np.float64)
    n = np.sum(~np.isnan(v), axis=0)
    out = np.full(v.shape[1:], np.nan)
    ok = n >= 2
    if ok.any():
        with np.errstate(invalid="ignore"):
            sd = np.nanstd(v[:, ok], axis=0, ddof=1)
        out[ok] = sd
    return out


def iav_difference(row: np.ndarray, column: np.ndarray) -> np.ndarray:
    """Off-diagonal panel of the IAV comparison: column dataset minus row dataset."""
    return np.asarray(column) - np.asarray(row)


def iav_pairs(row: np.ndarray, column: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Co-located finite IAV values for scatter/density plots."""
    row, column = np.asarray(row).ravel(), np.asarray(column).ravel()
    ok = np.isfinite(row) & np.isfinite(column)
    return row[ok], column[ok]


def tls_fit(x, y) -> tuple[float, float]:
    """Total least-squares line ``y = slope * x + intercept``.

    The direction is the principal eigenvector of the centered covariance
    matrix, so the fit minimizes orthogonal distances.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.size != y.size or x.size < 2:
        raise DomainError("TLS fit needs at least two (x, y) pairs")
    xm, ym = x.mean(), y.mean()
    dx, dy = x - xm, y - ym
    cov = np.array([[dx @ dx, dx @ dy], [dx @ dy, dy @ dy]]) / (x.size - 1)
    if cov[0, 0] == 0.0 and cov[1, 1] == 0.0:
        raise DomainError("TLS fit of a single repeated point is undefined")
    evals, evecs = np.linalg.eigh(cov)
    vx, vy = evecs[:, -1]
    if vx == 0.0:
        raise DomainError("TLS line is vertical")
    slope = vy / vx
    return float(slope), float(ym - slope * xm)
