"""Climate-driver attribution of the largest negative STEs.

For each component and each lag ``0..N`` the median of the (preprocessed)
temperature and precipitation drivers over the lag-shifted voxel set is
compared against the driver's 25th/75th percentiles:

    dry  : pr_med  < pr_q25        wet : pr_med  > pr_q75
    cold : tas_med < tas_q25       hot : tas_med > tas_q75
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .detect import Labeling
from .errors import DomainError
from .grid import Grid3D, percentile

ReferenceMode = Literal["footprint-climatology", "global-snapshot"]
CATEGORIES = ("cold", "hot", "dry", "wet")

Voxels = tuple[np.ndarray, np.ndarray, np.ndarray]


@dataclass(frozen=True)
class AttributionConfig:
    top_k: int = 100
    max_lag: int = 3
    quartiles: tuple[float, float] = (25.0, 75.0)
    reference_mode: ReferenceMode = "footprint-climatology"

    def __post_init__(self):
        if self.top_k < 1:
            raise DomainError("top_k must be >= 1")
        if self.max_lag < 0:
            raise DomainError("max_lag must be >= 0")
        if self.reference_mode not in ("footprint-climatology", "global-snapshot"):
            raise DomainError(f"unknown reference mode {self.reference_mode!r}")

    @property
    def lags(self) -> range:
        return range(self.max_lag + 1)


@dataclass(frozen=True)
class AttributionRecord:
    component_id: int
    lags: tuple[int, ...]
    tas_median: np.ndarray
    pr_median: np.ndarray
    tas_q25: np.ndarray
    tas_q75: np.ndarray
    pr_q25: np.ndarray
    pr_q75: np.ndarray
    coverage: np.ndarray  # fraction of voxels with a valid lag-shifted value
    hot: np.ndarray
    cold: np.ndarray
    dry: np.ndarray
    wet: np.ndarray

    def flags(self, category: str) -> np.ndarray:
        return getattr(self, category)


@dataclass(frozen=True)
class AttributionTable:
    structure: str
    top_k: int
    n_attributed: int
    lags: tuple[int, ...]
    per_lag: dict[str, list[int]]
    mean: dict[str, float]
    rounded: dict[str, int]
    note: str = ""
    records: list[AttributionRecord] = field(default_factory=list, repr=False)


def _values(driver) -> np.ndarray:
    return np.asarray(driver.values if isinstance(driver, Grid3D) else driver, dtype=np.float64)


def _shifted(values: np.ndarray, voxels: Voxels, lag: int) -> tuple[np.ndarray, float]:
    tt, yy, xx = (np.asarray(a) for a in voxels)
    if tt.size == 0:
        return np.empty(0), 0.0
    ts = tt - lag
    inside = ts >= 0
    v = values[ts[inside], yy[inside], xx[inside]]
    v = v[~np.isnan(v)]
    return v, v.size / tt.size


def lagged_driver_median(driver, voxels: Voxels, lag: int) -> tuple[float, float]:
    """Median of ``driver`` at ``(t - lag, y, x)`` over the component's voxels.

    Voxels shifted before the record start or onto missing values drop out.
    Returns ``(median, coverage)``; the median is NaN when nothing is covered.
    """
    if lag < 0:
        raise DomainError("lag must be >= 0")
    v, cov = _shifted(_values(driver), voxels, lag)
    if v.size == 0:
        return math.nan, 0.0
    return percentile(v, 50.0), cov


def reference_quartiles(driver, voxels: Voxels, lag: int,
                        mode: ReferenceMode = "footprint-climatology",
                        quartiles: tuple[float, float] = (25.0, 75.0)) -> tuple[float, float]:
    """Lower and upper reference percentiles of the driver.

    ``footprint-climatology`` pools the driver over the component's distinct
    cells for every month of the record. ``global-snapshot`` pools every
    non-missing cell at the lag-shifted event months. NaNs when the pool is
    empty.
    """
    values = _values(driver)
    tt, yy, xx = (np.asarray(a) for a in voxels)
    if mode == "footprint-climatology":
        ny, nx = values.shape[1:]
        cells = np.unique(yy * nx + xx)
        pool = values.reshape(values.shape[0], ny * nx)[:, cells]
    elif mode == "global-snapshot":
        months = np.unique(tt - lag)
        months = months[months >= 0]
        pool = values[months]
    else:
        raise DomainError(f"unknown reference mode {mode!r}")
    pool = pool[~np.isnan(pool)]
    if pool.size == 0:
        return math.nan, math.nan
    return percentile(pool, quartiles[0]), percentile(pool, quartiles[1])


def classify_component(tas, pr, voxels: Voxels, cfg: AttributionConfig = AttributionConfig(),
                       component_id: int = 0) -> AttributionRecord:
    """Hot/cold/dry/wet flags at every lag; undefined medians leave flags false."""
    tas_v, pr_v = _values(tas), _values(pr)
    if tas_v.shape != pr_v.shape:
        raise DomainError("tas and pr grids must share a shape")
    lags = tuple(cfg.lags)
    n = len(lags)
    cols = {k: np.full(n, np.nan) for k in
            ("tas_median", "pr_median", "tas_q25", "tas_q75", "pr_q25", "pr_q75")}
    coverage = np.zeros(n)
    for i, lag in enumerate(lags):
        cols["tas_median"][i], cov_t = lagged_driver_median(tas_v, voxels, lag)
        cols["pr_median"][i], cov_p = lagged_driver_median(pr_v, voxels, lag)
        coverage[i] = min(cov_t, cov_p)
        cols["tas_q25"][i], cols["tas_q75"][i] = reference_quartiles(
            tas_v, voxels, lag, cfg.reference_mode, cfg.quartiles)
        cols["pr_q25"][i], cols["pr_q75"][i] = reference_quartiles(
            pr_v, voxels, lag, cfg.reference_mode, cfg.quartiles)
    # NaN comparisons are False, so undefined medians or pools never flag
    return AttributionRecord(
        component_id=component_id, lags=lags, coverage=coverage,
        hot=cols["tas_median"] > cols["tas_q75"],
        cold=cols["tas_median"] < cols["tas_q25"],
        dry=cols["pr_median"] < cols["pr_q25"],
        wet=cols["pr_median"] > cols["pr_q75"],
        **cols,
    )


def component_voxels(labeling: Labeling, ids) -> dict[int, Voxels]:
    """Voxel coordinates of the requested components, from one pass over labels."""
    wanted = np.asarray(sorted(set(int(i) for i in ids)), dtype=np.int64)
    lab = labeling.labels
    sel = np.isin(lab, wanted)
    tt, yy, xx = np.nonzero(sel)
    lid = lab[tt, yy, xx]
    order = np.argsort(lid, kind="stable")
    tt, yy, xx, lid = tt[order], yy[order], xx[order], lid[order]
    bounds = np.searchsorted(lid, wanted), np.searchsorted(lid, wanted, side="right")
    return {int(c): (tt[a:b], yy[a:b], xx[a:b]) for c, a, b in zip(wanted, *bounds)}


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def attribution_table(stats, labeling: Labeling, tas, pr,
                      cfg: AttributionConfig = AttributionConfig()) -> AttributionTable:
    """Count the top-k ranked STEs flagged in each category at each lag.

    The per-lag counts are averaged over lags ``0..N``; the presentation value
    rounds half up and the fractional mean is kept alongside.
    """
    ranked = sorted(stats, key=lambda s: s.rank)[:cfg.top_k]
    lags = tuple(cfg.lags)
    note = ""
    if len(ranked) < cfg.top_k:
        note = f"only {len(ranked)} of the requested top {cfg.top_k} components available"
    vox = component_voxels(labeling, [s.id for s in ranked]) if ranked else {}
    records = [classify_component(tas, pr, vox[s.id], cfg, s.id) for s in ranked]
    per_lag = {c: [int(sum(bool(r.flags(c)[i]) for r in records)) for i in range(len(lags))]
               for c in CATEGORIES}
    mean = {c: (float(np.mean(v)) if records else 0.0) for c, v in per_lag.items()}
    return AttributionTable(
        structure=labeling.structure, top_k=cfg.top_k, n_attributed=len(records),
        lags=lags, per_lag=per_lag, mean=mean,
        rounded={c: round_half_up(m) for c, m in mean.items()},
        note=note, records=records,
    )
