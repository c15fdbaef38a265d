"""STE size distributions and power-law fits ``p(n) = C n^-gamma``."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Literal

import numpy as np

from .errors import DomainError

Method = Literal["logbin", "mle"]


@dataclass(frozen=True)
class SizeDistribution:
    sizes: np.ndarray  # distinct component sizes, ascending
    counts: np.ndarray  # number of components of each size

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def n_min(self) -> int:
        return int(self.sizes[0])

    @property
    def n_max(self) -> int:
        return int(self.sizes[-1])

    @property
    def probability(self) -> np.ndarray:
        return self.counts / self.total


@dataclass(frozen=True)
class PowerLawFit:
    gamma: float
    log_c: float  # natural log of the prefactor C
    r2: float
    method: str
    n_range: tuple[int, int]
    points: tuple[np.ndarray, np.ndarray] = field(default=(np.empty(0), np.empty(0)),
                                                  repr=False, compare=False)


def size_distribution(sizes: Iterable[int]) -> SizeDistribution:
    """Histogram of component sizes.

    Accepts voxel counts or anything with a ``voxel_count`` attribute.
    """
    vals = [getattr(s, "voxel_count", s) for s in sizes]
    arr = np.asarray(vals, dtype=np.int64)
    if arr.size == 0:
        raise DomainError("size distribution of zero components")
    if arr.min() < 1:
        raise DomainError("component sizes must be >= 1")
    u, c = np.unique(arr, return_counts=True)
    return SizeDistribution(u, c)


def _bin_edges(lo: int, hi: int, n_bins: int) -> np.ndarray:
    """Integer edges roughly geometric in ``[lo, hi]`` with every bin at least
    one integer wide (so small sizes get unit bins)."""
    ratio = (hi / lo) ** (1.0 / n_bins)
    edges = [lo]
    k = 1
    while edges[-1] < hi:
        edges.append(min(hi, max(edges[-1] + 1, int(math.floor(lo * ratio**k)))))
        k += 1
    return np.asarray(edges, dtype=np.int64)


def log_bins(d: SizeDistribution, n_bins: int = 8):
    """Points ``(n, p(n), count)`` for the log-log fit.

    With no more distinct sizes than ``n_bins`` every observed size is its own
    point with ``p = count / M``. Otherwise sizes fall into integer bins with
    about four bins per decade (at least ``n_bins``); a bin's probability is
    its count divided by ``M`` and by the number of integers it spans, placed
    at the geometric mean of its first and last integer. Empty bins are
    dropped.
    """
    if d.sizes.size <= n_bins:
        return d.sizes.astype(np.float64), d.probability, d.counts.astype(np.float64)
    lo, hi = d.n_min, d.n_max + 1
    nb = max(n_bins, int(math.ceil(4 * math.log10(hi / lo))))
    edges = _bin_edges(lo, hi, nb)
    idx = np.searchsorted(edges, d.sizes, side="right") - 1
    counts = np.bincount(idx, weights=d.counts, minlength=edges.size - 1)
    first = edges[:-1].astype(np.float64)
    last = edges[1:] - 1.0
    keep = counts > 0
    width = last - first + 1.0
    centre = np.sqrt(first * last)
    return centre[keep], counts[keep] / (d.total * width[keep]), counts[keep]


def _linfit(x: np.ndarray, y: np.ndarray, w: np.ndarray) -> tuple[float, float, float]:
    """Weighted least-squares line; returns slope, intercept, weighted r²."""
    w = w / w.sum()
    xm, ym = w @ x, w @ y
    sxx = w @ (x - xm) ** 2
    slope = (w @ ((x - xm) * (y - ym))) / sxx
    icpt = ym - slope * xm
    ss_res = w @ (y - (slope * x + icpt)) ** 2
    ss_tot = w @ (y - ym) ** 2
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(icpt), float(r2)


def powerlaw_fit(d: SizeDistribution, method: Method = "logbin",
                 n_bins: int = 8) -> PowerLawFit:
    """Fit ``log p(n) = log C - gamma log n``.

    ``logbin`` is least squares on log-binned probabilities, each point
    weighted by its count (the variance of ``log p`` scales as 1/count).
    ``mle`` is the discrete-data continuous approximation
    ``gamma = 1 + M / sum(log(n / (n_min - 1/2)))``, reported with the log-log
    r² of the binned points for comparison.
    """
    if d.sizes.size < 3:
        raise DomainError(f"power-law fit needs >= 3 distinct sizes, got {d.sizes.size}")
    x, p, w = log_bins(d, n_bins)
    lx, lp = np.log(x), np.log(p)
    slope, icpt, r2 = _linfit(lx, lp, w)
    if method == "logbin":
        gamma, log_c = 0.0 - slope, icpt
    elif method == "mle":
        denom = d.counts @ np.log(d.sizes / (d.n_min - 0.5))
        gamma = 1.0 + d.total / denom
        log_c = float(np.mean(lp + gamma * lx))
    else:
        raise DomainError(f"unknown power-law method {method!r}")
    return PowerLawFit(float(gamma), float(log_c), r2, method, (d.n_min, d.n_max), (x, p))


def natural_cutoff(n_min: float, m: int, gamma: float) -> float:
    """Largest expected size ``n_min * M^(1/(gamma-1))``."""
    if not gamma > 1.0:
        raise DomainError(f"natural cutoff needs gamma > 1, got {gamma}")
    if m < 1 or n_min < 1:
        raise DomainError("natural cutoff needs M >= 1 and n_min >= 1")
    return float(n_min * m ** (1.0 / (gamma - 1.0)))
