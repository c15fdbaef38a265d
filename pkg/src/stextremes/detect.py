"""Extreme masks and connected-component labeling of 3-D voxel volumes."""

from __future__ import annotations

import itertools
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .errors import DomainError
from .grid import Grid3D, GridAxes, percentile

Tail = Literal["negative", "positive", "both"]

STRUCTURE_NAMES = ("sesd", "seld", "lesd", "6n", "18n", "leld")
_ALIASES = {"6-n": "6n", "18-n": "18n", "26n": "leld", "26-n": "leld"}


# ----------------------------------------------------------------------------
# Thresholding
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class ThresholdSpec:
    """How the extremes threshold is derived from the anomaly pool.

    With ``split_tails`` (the default) ``percentile_total`` is the budget for
    both tails together, so each tail gets half of it. Without it the full
    percentile applies to each requested tail.
    """

    percentile_total: float = 10.0
    tail: Tail = "negative"
    split_tails: bool = True

    def __post_init__(self):
        if not 0.0 < self.percentile_total < 100.0:
            raise DomainError(f"percentile must be in (0, 100), got {self.percentile_total}")
        if self.tail not in ("negative", "positive", "both"):
            raise DomainError(f"unknown tail {self.tail!r}")

    @property
    def per_tail(self) -> float:
        return self.percentile_total / 2.0 if self.split_tails else self.percentile_total


@dataclass(frozen=True, eq=False)
class ExtremeMask:
    values: np.ndarray  # bool (time, lat, lon)
    spec: ThresholdSpec
    axes: GridAxes
    q_low: float | None = None
    q_high: float | None = None

    @property
    def shape(self):
        return self.values.shape

    @property
    def fraction(self) -> float:
        return float(self.values.mean()) if self.values.size else 0.0


def threshold_mask(anomalies: Grid3D, spec: ThresholdSpec = ThresholdSpec()) -> ExtremeMask:
    """Flag voxels beyond the percentile threshold(s) of all non-missing anomalies.

    Comparisons are strict, so a pool of identical values yields an empty mask.
    """
    a = anomalies.values.astype(np.float64)
    valid = ~np.isnan(a)
    pool = a[valid]
    if pool.size == 0:
        raise DomainError("anomaly pool is empty")
    mask = np.zeros(a.shape, dtype=bool)
    q_low = q_high = None
    filled = np.where(valid, a, 0.0)
    if spec.tail in ("negative", "both"):
        q_low = percentile(pool, spec.per_tail)
        mask |= valid & (filled < q_low)
    if spec.tail in ("positive", "both"):
        q_high = percentile(pool, 100.0 - spec.per_tail)
        mask |= valid & (filled > q_high)
    mask.setflags(write=False)
    return ExtremeMask(mask, spec, anomalies.axes, q_low, q_high)


# ----------------------------------------------------------------------------
# Neighborhood structures
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class NeighborhoodStructure:
    name: str
    offsets: tuple[tuple[int, int, int], ...]  # (dt, dlat, dlon)

    def __len__(self):
        return len(self.offsets)

    def half(self) -> tuple[tuple[int, int, int], ...]:
        """One offset out of each ``{d, -d}`` pair."""
        return tuple(o for o in self.offsets if o > (0, 0, 0))


_ALL = [o for o in itertools.product((-1, 0, 1), repeat=3) if o != (0, 0, 0)]


def canonical_name(kind: str) -> str:
    name = _ALIASES.get(kind.strip().lower(), kind.strip().lower())
    if name not in STRUCTURE_NAMES:
        raise DomainError(
            f"unknown neighborhood structure {kind!r}; expected one of {', '.join(STRUCTURE_NAMES)}"
        )
    return name


def neighborhood(kind: str, lesd_connectivity: int = 8) -> NeighborhoodStructure:
    """Offsets for one of ``sesd, seld, lesd, 6n, 18n, leld``.

    ``lesd_connectivity`` selects the 8- (default) or 4-neighbor spatial plane.
    """
    name = canonical_name(kind)
    l1 = {o: sum(map(abs, o)) for o in _ALL}
    if name == "sesd":
        offs = []
    elif name == "seld":
        offs = [o for o in _ALL if o[1] == 0 and o[2] == 0]
    elif name == "lesd":
        if lesd_connectivity not in (4, 8):
            raise DomainError("lesd connectivity must be 4 or 8")
        offs = [o for o in _ALL if o[0] == 0 and (lesd_connectivity == 8 or l1[o] == 1)]
    elif name == "6n":
        offs = [o for o in _ALL if l1[o] == 1]
    elif name == "18n":
        offs = [o for o in _ALL if l1[o] <= 2]
    else:
        offs = list(_ALL)
    return NeighborhoodStructure(name, tuple(sorted(offs)))


# ----------------------------------------------------------------------------
# Labeling
# ----------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Labeling:
    """Component ids per voxel (0 = background) plus a component table.

    Ids run from 1 and are ordered by each component's first voxel in
    ``(time, lat, lon)`` raster order.
    """

    labels: np.ndarray
    sizes: np.ndarray  # sizes[i] = voxel count of component i + 1
    first_voxel: np.ndarray  # flat index of each component's first voxel
    structure: str
    wrap_lon: bool
    axes: GridAxes | None = field(default=None)

    @property
    def n_components(self) -> int:
        return int(self.sizes.size)

    def voxels(self, component_id: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return np.nonzero(self.labels == component_id)


def _edges(mask: np.ndarray, offsets, wrap_lon: bool, index: np.ndarray):
    """Pairs of masked voxel indices adjacent under ``offsets``."""
    nt, ny, nx = mask.shape
    us, vs = [], []
    for dt_, dy, dx in offsets:
        # a voxel p and its neighbor p + d, both inside the volume
        st = slice(max(0, -dt_), nt - max(0, dt_))
        sy = slice(max(0, -dy), ny - max(0, dy))
        tt = slice(max(0, dt_), nt + min(0, dt_))
        ty = slice(max(0, dy), ny + min(0, dy))
        if wrap_lon:
            if dx == 0 or nx == 0:
                src_m, dst_m = mask[st, sy], mask[tt, ty]
                src_i, dst_i = index[st, sy], index[tt, ty]
            else:
                dst_m = np.roll(mask[tt, ty], -dx, axis=2)
                dst_i = np.roll(index[tt, ty], -dx, axis=2)
                src_m, src_i = mask[st, sy], index[st, sy]
        else:
            sx = slice(max(0, -dx), nx - max(0, dx))
            tx = slice(max(0, dx), nx + min(0, dx))
            src_m, dst_m = mask[st, sy, sx], mask[tt, ty, tx]
            src_i, dst_i = index[st, sy, sx], index[tt, ty, tx]
        both = src_m & dst_m
        if both.any():
            us.append(src_i[both])
            vs.append(dst_i[both])
    if not us:
        empty = np.empty(0, dtype=np.int64)
        return empty, empty
    return np.concatenate(us), np.concatenate(vs)


def _compress(parent: np.ndarray) -> np.ndarray:
    while True:
        grand = parent[parent]
        if np.array_equal(grand, parent):
            return parent
        parent = grand


def _union_find(n: int, u: np.ndarray, v: np.ndarray,
                parent: np.ndarray | None = None) -> np.ndarray:
    """Vectorized union-find; every node ends up pointing at its root.

    Roots are always hooked onto the smaller index, so the final root of a
    component is its minimum node index.
    """
    if parent is None:
        parent = np.arange(n, dtype=np.int64)
    parent = _compress(parent)
    while u.size:
        pu, pv = parent[u], parent[v]
        diff = pu != pv
        if not diff.any():
            break
        pu, pv = pu[diff], pv[diff]
        u, v = u[diff], v[diff]
        np.minimum.at(parent, np.maximum(pu, pv), np.minimum(pu, pv))
        parent = _compress(parent)
    return parent


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("STX_THREADS", "1")))
    except ValueError:
        return 1


def label_components(mask, structure: NeighborhoodStructure | str = "leld",
                     wrap_lon: bool | None = None, threads: int | None = None) -> Labeling:
    """Label connected manifolds of masked voxels.

    Parameters
    ----------
    mask : ExtremeMask or bool ndarray (time, lat, lon)
    structure : NeighborhoodStructure or name
    wrap_lon : bool, optional
        Treat the last longitude column as adjacent to the first. Defaults to
        on for longitude-global masks and off otherwise; requesting it on a
        non-global ``ExtremeMask`` is an error.
    threads : int, optional
        Number of time slabs labeled concurrently before the boundary merge
        (defaults to ``STX_THREADS``). The result does not depend on it.
    """
    axes = None
    if isinstance(mask, ExtremeMask):
        axes = mask.axes
        values = np.asarray(mask.values, dtype=bool)
        if wrap_lon is None:
            wrap_lon = axes.is_global_lon
        elif wrap_lon and not axes.is_global_lon:
            raise DomainError(
                f"longitude wrap requested on a grid spanning {axes.lon_span:g} degrees"
            )
    else:
        values = np.asarray(mask, dtype=bool)
        wrap_lon = bool(wrap_lon)
    if values.ndim != 3:
        raise DomainError(f"mask must be 3-D, got shape {values.shape}")
    if isinstance(structure, str):
        structure = neighborhood(structure)
    nt, ny, nx = values.shape
    n = values.size
    offsets = structure.half()
    index = np.arange(n, dtype=np.int64).reshape(values.shape)
    threads = _threads() if threads is None else max(1, threads)
    nslab = min(threads, nt) if nt else 1

    if nslab <= 1:
        u, v = _edges(values, offsets, wrap_lon, index)
        parent = _union_find(n, u, v)
    else:
        bounds = np.linspace(0, nt, nslab + 1).astype(int)

        def slab(i):
            sl = slice(bounds[i], bounds[i + 1])
            return _edges(values[sl], offsets, wrap_lon, index[sl])

        with ThreadPoolExecutor(nslab) as pool:
            parts = list(pool.map(slab, range(nslab)))
        parent = np.arange(n, dtype=np.int64)
        for u, v in parts:
            parent = _union_find(n, u, v, parent)
        # merge across slab boundaries: offsets with dt = +1 from the last
        # layer of each slab into the first layer of the next
        cross = tuple(o for o in offsets if o[0] == 1)
        for b in bounds[1:-1]:
            sl = slice(b - 1, b + 1)
            u, v = _edges(values[sl], cross, wrap_lon, index[sl])
            parent = _union_find(n, u, v, parent)

    flat = values.ravel()
    roots = parent[flat]
    firsts, inverse, sizes = np.unique(roots, return_inverse=True, return_counts=True)
    labels = np.zeros(n, dtype=np.int64)
    labels[flat] = inverse.ravel() + 1
    labels = labels.reshape(values.shape)
    labels.setflags(write=False)
    return Labeling(labels, sizes.astype(np.int64), firsts.astype(np.int64),
                    structure.name, wrap_lon, axes)


def count_components(labeling: Labeling) -> int:
    return labeling.n_components
