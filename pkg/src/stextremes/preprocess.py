"""Singular spectrum analysis of grid-cell series and driver scaling.

Each cell's monthly series is split into a nonlinear trend (periods of
``trend_period`` months and longer), a modulated annual cycle (12 months and
its harmonics) and the residual anomaly.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .grid import Grid3D

TREND_PERIOD = 120  # months
ANNUAL_PERIOD = 12
N_HARMONICS = 6


def default_window(n: int) -> int:
    """Largest multiple of 12 not exceeding ``n / 2``."""
    return (n // 2) // ANNUAL_PERIOD * ANNUAL_PERIOD


@dataclass(frozen=True)
class SsaDecomposition:
    trend: np.ndarray
    annual: np.ndarray
    anomaly: np.ndarray
    window_length: int
    eigenvalues: np.ndarray
    frequencies: np.ndarray  # dominant frequency (cycles/month) per eigentriple
    groups: np.ndarray  # 0 = trend, 1 = annual, 2 = anomaly


def _reconstructions(x: np.ndarray, window: int) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues and diagonal-averaged reconstruction of every eigentriple."""
    n = x.size
    k = n - window + 1
    traj = np.lib.stride_tricks.sliding_window_view(x, window).T  # (L, K)
    lagcov = traj @ traj.T
    evals, evecs = np.linalg.eigh(lagcov)
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], evecs[:, order]
    # eigentriple i is evecs[:, i] (outer) evecs[:, i].T @ traj; the
    # anti-diagonal sums of a rank-one matrix u v^T are the convolution u * v
    pcs = evecs.T @ traj  # (L, K)
    nfft = 1 << (n - 1).bit_length()
    rc = np.fft.irfft(np.fft.rfft(evecs.T, nfft) * np.fft.rfft(pcs, nfft), nfft)[:, :n]
    counts = np.minimum.reduce([
        np.arange(1, n + 1), np.full(n, window), np.full(n, k), np.arange(n, 0, -1)
    ])
    return evals, rc / counts


def dominant_frequency(series: np.ndarray) -> np.ndarray:
    """Periodogram argmax (cycles per sample) along the last axis."""
    n = series.shape[-1]
    power = np.abs(np.fft.rfft(series, axis=-1)) ** 2
    return np.argmax(power, axis=-1) / n


def classify_frequencies(freqs: np.ndarray, n: int,
                         trend_period: float = TREND_PERIOD) -> np.ndarray:
    """Group codes: 0 trend, 1 annual cycle, 2 anomaly."""
    freqs = np.asarray(freqs, dtype=np.float64)
    harmonics = np.arange(1, N_HARMONICS + 1) / ANNUAL_PERIOD
    near = np.abs(freqs[:, None] - harmonics[None, :]) <= 0.5 / n + 1e-12
    groups = np.full(freqs.shape, 2, dtype=np.int8)
    groups[near.any(axis=1)] = 1
    groups[freqs < 1.0 / trend_period] = 0
    return groups


def ssa_decompose(series, window: int | None = None,
                  trend_period: float = TREND_PERIOD) -> SsaDecomposition:
    """Split a gap-free monthly series into trend, annual cycle and anomaly.

    The series is centered first and its mean assigned to the trend.
    Eigentriples of the lag-covariance matrix are reconstructed by diagonal
    averaging and grouped by the dominant periodogram frequency of their
    reconstruction: below ``1/trend_period`` goes to the trend, within half a
    frequency bin of ``k/12`` (k = 1..6) to the annual cycle, the rest to the
    anomaly.
    """
    x = np.asarray(series, dtype=np.float64)
    n = x.size
    if x.ndim != 1 or n < 24:
        raise DomainError(f"SSA needs a 1-D series of length >= 24, got {x.shape}")
    if np.isnan(x).any():
        raise DomainError("SSA series must be gap-free")
    if window is None:
        window = default_window(n)
    if not 12 <= window <= n / 2:
        raise DomainError(f"window {window} outside [12, {n / 2:g}]")
    if np.all(x == x[0]):
        zeros = np.zeros(n)
        return SsaDecomposition(
            trend=np.full(n, x[0]), annual=zeros, anomaly=zeros.copy(),
            window_length=window, eigenvalues=np.zeros(window),
            frequencies=np.zeros(window), groups=np.zeros(window, dtype=np.int8),
        )
    # the mean goes straight to the trend so a constant offset cannot leak
    # into other eigentriples
    mean = float(np.mean(x))
    evals, rc = _reconstructions(x - mean, window)
    freqs = dominant_frequency(rc)
    groups = classify_frequencies(freqs, n, trend_period)
    trend = rc[groups == 0].sum(axis=0) + mean
    annual = rc[groups == 1].sum(axis=0)
    # residual by subtraction keeps trend + annual + anomaly == x to rounding
    anomaly = x - trend - annual
    return SsaDecomposition(trend, annual, anomaly, window, evals, freqs, groups)


# ----------------------------------------------------------------------------
# Grid-level operations
# ----------------------------------------------------------------------------

def _threads() -> int:
    try:
        return max(1, int(os.environ.get("STX_THREADS", "1")))
    except ValueError:
        return 1


def _per_cell(g: Grid3D, fn, window: int | None) -> tuple[np.ndarray, np.ndarray]:
    """Apply ``fn(decomp, series) -> (out_series, flag)`` to every complete cell.

    Cells with any missing month come back all-missing.
    """
    vals = g.values.astype(np.float64)
    nt, ny, nx = vals.shape
    flat = vals.reshape(nt, ny * nx)
    out = np.full_like(flat, np.nan)
    flags = np.zeros(ny * nx, dtype=bool)
    complete = np.flatnonzero(~np.isnan(flat).any(axis=0))

    def work(cells):
        for c in cells:
            series = flat[:, c]
            out[:, c], flags[c] = fn(ssa_decompose(series, window), series)

    nthreads = min(_threads(), max(1, complete.size))
    if nthreads == 1:
        work(complete)
    else:
        with ThreadPoolExecutor(nthreads) as pool:
            list(pool.map(work, np.array_split(complete, nthreads)))
    return out.reshape(nt, ny, nx), flags.reshape(ny, nx)


def compute_anomalies(g: Grid3D, window: int | None = None) -> Grid3D:
    """GPP anomalies: series minus SSA trend and annual cycle, same units."""
    out, _ = _per_cell(g, lambda d, s: (d.anomaly, False), window)
    return g.with_values(out.astype(g.values.dtype))


def _degenerate(spread: float, series: np.ndarray) -> bool:
    scale = float(np.max(np.abs(series)))
    return spread <= 1e-12 * max(scale, np.finfo(float).tiny)


def scale_temperature(g: Grid3D, window: int | None = None,
                      return_flags: bool = False):
    """Temperature anomalies divided by their per-cell sample standard deviation.

    Cells whose anomaly has zero spread are set to 0 and flagged.
    """

    def fn(d, s):
        sd = float(np.std(d.anomaly, ddof=1))
        if _degenerate(sd, s):
            return np.zeros_like(s), True
        return d.anomaly / sd, False

    out, flags = _per_cell(g, fn, window)
    res = g.with_values(out, units="1")
    return (res, flags) if return_flags else res


def normalize_precip(g: Grid3D, window: int | None = None,
                     return_flags: bool = False):
    """Detrended precipitation divided by the cell's total over the record.

    Only the trend is removed; the annual cycle stays in. Cells with zero
    total precipitation are set to 0 and flagged.
    """

    def fn(d, s):
        total = float(np.sum(s))
        if total == 0.0:
            return np.zeros_like(s), True
        return (s - d.trend) / total, False

    out, flags = _per_cell(g, fn, window)
    res = g.with_values(out, units="1")
    return (res, flags) if return_flags else res
