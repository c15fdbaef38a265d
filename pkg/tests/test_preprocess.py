import numpy as np
import pytest

from oracles import ssa_components
from stextremes.errors import DomainError
from stextremes.grid import Grid3D, GridAxes, month_index
from stextremes.preprocess import (
    classify_frequencies,
    compute_anomalies,
    default_window,
    dominant_frequency,
    normalize_precip,
    scale_temperature,
    ssa_decompose,
)

T = 156
t = np.arange(T)


def grid_of(series_by_cell, units="kg m-2 s-1"):
    arr = np.asarray(series_by_cell, dtype=float)  # (ncell, T)
    n = arr.shape[0]
    ax = GridAxes.from_edges(np.arange(month_index(2001, 1), month_index(2001, 1) + arr.shape[1]),
                             [0, 1], np.linspace(0, n, n + 1))
    return Grid3D("v", units, ax, arr.T[:, None, :])


def test_default_window():
    assert default_window(156) == 72
    assert default_window(24) == 12
    assert default_window(100) == 48


def test_pure_annual_harmonic():
    x = 10 * np.sin(2 * np.pi * t / 12)
    d = ssa_decompose(x, 72)
    assert np.var(d.annual) / np.var(x) >= 0.999
    assert np.max(np.abs(d.anomaly)) <= 1e-6 * 10


def test_pure_ramp():
    x = 0.01 * t
    d = ssa_decompose(x, 72)
    assert 1 - np.sum((d.trend - x) ** 2) / np.sum((x - x.mean()) ** 2) >= 0.999


@pytest.mark.parametrize("seed", range(5))
def test_ramp_sine_noise(seed):
    rng = np.random.default_rng(seed)
    amp = 10.0
    sigma = 0.1 * amp
    ramp, sine = 0.05 * t, amp * np.sin(2 * np.pi * t / 12)
    d = ssa_decompose(ramp + sine + rng.normal(0, sigma, T), 72)
    inner = slice(int(0.1 * T), int(0.9 * T))
    bound = 0.15 * sigma * np.sqrt(T)
    assert np.sqrt(np.mean((d.trend - ramp)[inner] ** 2)) <= bound
    assert np.sqrt(np.mean((d.annual - sine)[inner] ** 2)) <= bound


@pytest.mark.parametrize("seed", range(4))
def test_additive_reconstruction(seed):
    x = np.random.default_rng(seed).normal(size=T) * 3 + 100
    d = ssa_decompose(x)
    assert np.max(np.abs(d.trend + d.annual + d.anomaly - x)) <= 1e-9 * np.max(np.abs(x))
    assert set(np.unique(d.groups)) <= {0, 1, 2}


def test_reconstructions_match_explicit_svd():
    from stextremes.preprocess import _reconstructions

    x = np.random.default_rng(9).normal(size=60)
    evals, rc = _reconstructions(x, 24)
    ref_evals, ref_rc = ssa_components(x, 24)
    np.testing.assert_allclose(evals, ref_evals, rtol=1e-9, atol=1e-9)
    # compare the leading, well-separated eigentriples plus the total
    np.testing.assert_allclose(rc.sum(axis=0), x, atol=1e-10)
    np.testing.assert_allclose(rc[:3], ref_rc[:3], atol=1e-8)


def test_frequency_separation():
    annual, slow = np.sin(2 * np.pi * t / 12), np.sin(2 * np.pi * t / 240)
    d = ssa_decompose(annual + slow)
    assert 1 - np.sum((d.annual - annual) ** 2) / np.sum(annual**2) >= 0.99
    assert 1 - np.sum((d.trend - slow) ** 2) / np.sum(slow**2) >= 0.90


def test_grouping_rule():
    f = np.array([0.0, 1 / 156, 13 / 156, 26 / 156, 0.5, 0.3])
    assert classify_frequencies(f, 156).tolist() == [0, 0, 1, 1, 1, 2]
    assert dominant_frequency(np.cos(2 * np.pi * 13 * t / 156)) == pytest.approx(13 / 156)


def test_constant_series():
    d = ssa_decompose(np.full(48, 4.2))
    assert np.all(d.trend == 4.2)
    assert np.all(d.annual == 0) and np.all(d.anomaly == 0)


@pytest.mark.parametrize("n,window", [(20, None), (48, 11), (48, 25)])
def test_window_errors(n, window):
    with pytest.raises(DomainError):
        ssa_decompose(np.arange(n, dtype=float), window)


def test_gap_rejected():
    x = np.arange(48.0)
    x[3] = np.nan
    with pytest.raises(DomainError):
        ssa_decompose(x)


# -- grid operations -------------------------------------------------------------

def test_anomalies_of_trend_plus_annual():
    cells = [0.5 + 0.001 * t + 0.2 * np.sin(2 * np.pi * t / 12 + k) for k in range(3)]
    a = compute_anomalies(grid_of(cells))
    assert np.max(np.abs(a.values)) <= 1e-6 * 0.5


def test_anomalies_missing_cell_and_single_cell():
    rng = np.random.default_rng(1)
    good = rng.normal(size=T)
    bad = rng.normal(size=T)
    bad[10] = np.nan
    a = compute_anomalies(grid_of([good, bad]))
    assert np.all(np.isnan(a.values[:, 0, 1]))
    np.testing.assert_array_equal(a.values[:, 0, 0], ssa_decompose(good).anomaly)


def test_anomaly_invariant_to_constant_offset():
    x = np.random.default_rng(2).normal(size=T)
    a1 = compute_anomalies(grid_of([x])).values
    a2 = compute_anomalies(grid_of([x + 37.0])).values
    np.testing.assert_allclose(a1, a2, atol=1e-8)


def test_scale_temperature():
    rng = np.random.default_rng(3)
    cells = [280 + 5 * np.sin(2 * np.pi * t / 12) + rng.normal(0, 1.5, T), np.full(T, 290.0)]
    out, flags = scale_temperature(grid_of(cells, "K"), return_flags=True)
    assert np.std(out.values[:, 0, 0], ddof=1) == pytest.approx(1.0, abs=1e-9)
    assert np.all(out.values[:, 0, 1] == 0) and flags.tolist() == [[False, True]]
    anom = ssa_decompose(cells[0]).anomaly
    np.testing.assert_allclose(out.values[:, 0, 0], anom / np.std(anom, ddof=1), rtol=1e-12)


def test_scale_temperature_known_sigma():
    rng = np.random.default_rng(4)
    noise = rng.normal(size=T)
    x = 270 + 0.01 * t + noise
    anom = ssa_decompose(x).anomaly
    anom2 = anom / np.std(anom, ddof=1) * 2.0  # anomaly with sigma exactly 2
    d = ssa_decompose(x)
    y = d.trend + d.annual + anom2
    out = scale_temperature(grid_of([y], "K")).values[:, 0, 0]
    ref = ssa_decompose(y).anomaly
    np.testing.assert_allclose(out, ref / np.std(ref, ddof=1), rtol=1e-12)


def test_normalize_precip():
    rng = np.random.default_rng(5)
    ramp_noise = 2.0 + 0.01 * t + rng.gamma(2.0, 0.3, T)
    cells = [np.full(T, 3.0), np.zeros(T), ramp_noise]
    out, flags = normalize_precip(grid_of(cells, "kg m-2 s-1 (pr)"), return_flags=True)
    assert np.max(np.abs(out.values[:, 0, 0])) <= 1e-12
    assert np.all(out.values[:, 0, 1] == 0) and flags.tolist() == [[False, True, False]]
    d = ssa_decompose(ramp_noise)
    np.testing.assert_allclose(out.values[:, 0, 2], (ramp_noise - d.trend) / ramp_noise.sum(),
                               rtol=1e-12)


def test_parallel_cells_match_serial(monkeypatch):
    rng = np.random.default_rng(6)
    g = grid_of(rng.normal(size=(9, T)))
    monkeypatch.setenv("STX_THREADS", "1")
    a = compute_anomalies(g).values
    monkeypatch.setenv("STX_THREADS", "4")
    b = compute_anomalies(g).values
    assert a.tobytes() == b.tobytes()
