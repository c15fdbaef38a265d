"""Random synthetic scenes shared by the unit and acceptance tests."""

import numpy as np


def attribution_scene(rng, shape=(24, 12, 12), nan_fraction=0.0):
    """Standardized-looking tas/pr with a warm, dry patch under a planted component.

    Returns ``(tas, pr, voxels)`` where ``voxels`` is a (t, y, x) index triple.
    """
    nt, ny, nx = shape
    tas = rng.normal(0, 1, shape)
    pr = rng.normal(0, 0.01, shape)
    t0 = int(rng.integers(0, nt - 4))
    y0, x0 = int(rng.integers(0, ny - 3)), int(rng.integers(0, nx - 3))
    dt, dy, dx = (int(v) for v in rng.integers(1, 4, 3))
    block = np.zeros(shape, dtype=bool)
    block[t0:t0 + dt, y0:y0 + dy, x0:x0 + dx] = True
    block &= rng.random(shape) < 0.8
    if not block.any():
        block[t0, y0, x0] = True
    # the patch reaches back a few months so that some lags see it
    lead = int(rng.integers(0, 4))
    patch = np.zeros(shape, dtype=bool)
    patch[max(0, t0 - lead):t0 + dt, y0:y0 + dy, x0:x0 + dx] = True
    tas[patch] += rng.uniform(0.5, 3.0)
    pr[patch] -= rng.uniform(0.005, 0.03)
    if nan_fraction:
        tas[rng.random(shape) < nan_fraction] = np.nan
        pr[rng.random(shape) < nan_fraction] = np.nan
    return tas, pr, np.nonzero(block)


def raw_gpp(anomalies, seed=5):
    """Anomalies plus a smooth trend and seasonal cycle, in gC m-2 day-1."""
    rng = np.random.default_rng(seed)
    nt = anomalies.shape[0]
    t = np.arange(nt)[:, None, None]
    base = rng.uniform(2.0, 6.0, anomalies.shape[1:])[None]
    season = 2.0 * np.sin(2 * np.pi * t / 12 + rng.uniform(0, 6.3, anomalies.shape[1:])[None])
    return base + 0.01 * t + season + anomalies * 86400 * 1e3
