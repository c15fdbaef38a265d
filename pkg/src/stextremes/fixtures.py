"""Synthetic scenes with planted STEs, used by the tests and ``stx make-fixture``."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .grid import Grid3D, GridAxes, month_index
from .io import CARBON_FLUX, save_grid

Voxel = tuple[int, int, int]


@dataclass
class PlantedScene:
    anomalies: Grid3D
    components: list[list[Voxel]]  # planted voxel sets
    values: list[list[float]]  # anomaly value per planted voxel


def _background(rng, shape) -> np.ndarray:
    # half the voxels exactly zero, the rest positive: the 5% tail threshold
    # is then 0 and only the negative planted voxels fall strictly below it
    bg = rng.uniform(0.0, 2e-8, shape)
    bg[rng.random(shape) < 0.5] = 0.0
    return bg


def planted_fixture(seed: int = 7) -> PlantedScene:
    """24 months x 8 lat x 10 lon global grid with three planted components.

    One component straddles the antimeridian (lon columns 9 and 0).
    """
    rng = np.random.default_rng(seed)
    axes = GridAxes.from_edges(np.arange(month_index(2001, 1), month_index(2001, 1) + 24),
                               np.linspace(-90, 90, 9), np.linspace(0, 360, 11))
    vals = _background(rng, axes.shape)
    comps = [
        [(2, 3, 2), (2, 3, 3), (3, 3, 3), (3, 4, 4), (4, 4, 4), (4, 5, 5)],
        [(10, 1, 9), (10, 1, 0), (11, 2, 0), (11, 2, 9)],
        [(18, 6, 6), (19, 6, 6), (20, 6, 6)],
    ]
    values = []
    for comp in comps:
        v = list(-rng.uniform(1e-8, 5e-8, len(comp)))
        values.append(v)
        for (t, y, x), a in zip(comp, v):
            vals[t, y, x] = a
    g = Grid3D("gpp", CARBON_FLUX, axes, vals)
    return PlantedScene(g, comps, values)


def zipf_quantile_sizes(n: int, gamma: float, n_max: int = 100_000) -> np.ndarray:
    """Sizes at the mid-quantiles ``(i + 1/2) / n`` of a discrete power law."""
    support = np.arange(1, n_max + 1, dtype=np.float64)
    cdf = np.cumsum(support**-gamma)
    cdf /= cdf[-1]
    u = (np.arange(n) + 0.5) / n
    return np.searchsorted(cdf, u).astype(np.int64) + 1


def _grow(rng, box_lo, box_shape, size) -> list[Voxel]:
    """Random 6-connected blob of ``size`` voxels inside a box."""
    start = tuple(int(b + s // 2) for b, s in zip(box_lo, box_shape))
    blob = {start}
    frontier = [start]
    faces = [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)]
    while len(blob) < size:
        p = frontier[rng.integers(len(frontier))]
        d = faces[rng.integers(6)]
        q = tuple(a + b for a, b in zip(p, d))
        if all(lo <= c < lo + s for c, lo, s in zip(q, box_lo, box_shape)) and q not in blob:
            blob.add(q)
            frontier.append(q)
    return sorted(blob)


def planted_powerlaw_scene(n_components: int = 50, gamma: float = 1.8,
                           seed: int = 11) -> PlantedScene:
    """Global grid with components whose sizes follow a discrete power law.

    Components live in disjoint boxes separated by at least one background
    voxel in every direction, so each one is its own leld manifold.
    """
    rng = np.random.default_rng(seed)
    sizes = zipf_quantile_sizes(n_components, gamma)
    box = (10, 8, 8)
    nbox = (4, 4, 8)
    if n_components > int(np.prod(nbox)):
        raise ValueError("too many components for the scene")
    interior = (box[0] - 1, box[1] - 1, box[2] - 1)
    if sizes.max() > np.prod(interior):
        raise ValueError("largest component does not fit in a box")
    axes = GridAxes.from_edges(
        np.arange(month_index(2001, 1), month_index(2001, 1) + box[0] * nbox[0]),
        np.linspace(-90, 90, box[1] * nbox[1] + 1),
        np.linspace(0, 360, box[2] * nbox[2] + 1),
    )
    vals = _background(rng, axes.shape)
    slots = rng.permutation(int(np.prod(nbox)))[:n_components]
    comps, values = [], []
    for size, slot in zip(sizes, slots):
        bt, by, bx = np.unravel_index(slot, nbox)
        lo = (int(bt) * box[0], int(by) * box[1], int(bx) * box[2])
        comp = _grow(rng, lo, interior, int(size))
        v = list(-rng.uniform(1e-8, 3e-8, len(comp)))
        for (t, y, x), a in zip(comp, v):
            vals[t, y, x] = a
        comps.append(comp)
        values.append(v)
    return PlantedScene(Grid3D("gpp", CARBON_FLUX, axes, vals), comps, values)


def driver_fields(axes: GridAxes, seed: int = 3) -> tuple[Grid3D, Grid3D]:
    """Plausible raw tas (K) and pr (kg m-2 s-1) fields on ``axes``."""
    rng = np.random.default_rng(seed)
    nt, ny, nx = axes.shape
    t = np.arange(nt)[:, None, None]
    lat = axes.lat_centers[None, :, None]
    season = np.sin(2 * np.pi * t / 12) * np.sign(lat + 1e-9)
    tas = 288.0 - 0.3 * np.abs(lat) + 8.0 * season + rng.normal(0, 1.0, (nt, ny, nx))
    pr = np.abs(3e-5 * (1.0 + 0.5 * season) + rng.normal(0, 1e-5, (nt, ny, nx)))
    return (Grid3D("tas", "K", axes, tas),
            Grid3D("pr", "kg m-2 s-1 (pr)", axes, pr))


def write_fixture(directory: str | Path, seed: int = 7) -> Path:
    """Write the three-component fixture plus drivers and a config file."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    scene = planted_fixture(seed)
    tas, pr = driver_fields(scene.anomalies.axes)
    save_grid(scene.anomalies, d / "gpp_anomaly.stxg")
    save_grid(tas, d / "tas.stxg")
    save_grid(pr, d / "pr.stxg")
    cfg = d / "fixture.cfg"
    cfg.write_text(
        "# three planted STEs on a 24 x 8 x 10 global grid\n"
        "gpp = gpp_anomaly.stxg\n"
        "gpp_is_anomaly = true\n"
        "tas = tas.stxg\n"
        "pr = pr.stxg\n"
        "structures = sesd,seld,lesd,6n,18n,leld\n"
        "top_k = 10\n"
        "lags = 3\n"
        "out = out\n",
        encoding="utf-8",
    )
    return cfg
