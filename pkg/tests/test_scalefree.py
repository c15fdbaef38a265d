import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import discrete_powerlaw_sample
from stextremes.detect import label_components
from stextremes.errors import DomainError
from stextremes.scalefree import (
    log_bins,
    natural_cutoff,
    powerlaw_fit,
    size_distribution,
)


def test_size_distribution_examples():
    d = size_distribution([1, 1, 2])
    assert d.sizes.tolist() == [1, 2] and d.counts.tolist() == [2, 1]
    assert d.total == 3
    d = size_distribution([7])
    assert (d.sizes.tolist(), d.counts.tolist(), d.n_min, d.n_max) == ([7], [1], 7, 7)


def test_size_distribution_from_labeling():
    m = np.random.default_rng(0).random((6, 6, 6)) < 0.3
    lab = label_components(m, "6n")
    d = size_distribution(lab.sizes)
    assert d.total == lab.n_components
    assert d.probability.sum() == pytest.approx(1.0)


def test_size_distribution_errors():
    with pytest.raises(DomainError):
        size_distribution([])
    with pytest.raises(DomainError):
        size_distribution([0, 3])


def test_exact_inverse_square():
    d = size_distribution(np.repeat([1, 2, 4, 8], [64, 16, 4, 1]))
    fit = powerlaw_fit(d)
    assert abs(fit.gamma - 2.0) <= 1e-9
    assert fit.r2 == pytest.approx(1.0)
    assert fit.log_c == pytest.approx(math.log(64 / 85))


@pytest.mark.parametrize("gamma", [1.5, 2.0, 2.5])
def test_exact_loglinear_line(gamma):
    sizes = np.arange(1, 7)
    counts = np.round(1e6 * sizes**-gamma).astype(int)
    d = size_distribution(np.repeat(sizes, counts))
    # counts rounded to integers, so the line is exact only to ~1e-6
    assert powerlaw_fit(d).gamma == pytest.approx(gamma, abs=1e-5)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 50))
def test_gamma_invariant_to_count_scaling(factor):
    d = size_distribution(discrete_powerlaw_sample(np.random.default_rng(4), 2000, 1.8))
    scaled = size_distribution(np.repeat(d.sizes, d.counts * factor))
    assert powerlaw_fit(scaled).gamma == pytest.approx(powerlaw_fit(d).gamma, rel=1e-9)


@pytest.mark.parametrize("seed", range(5))
def test_sampled_gamma_1_8(seed):
    sizes = discrete_powerlaw_sample(np.random.default_rng(seed), 10_000, 1.8)
    fit = powerlaw_fit(size_distribution(sizes))
    assert 1.7 <= fit.gamma <= 1.9
    mle = powerlaw_fit(size_distribution(sizes), method="mle")
    assert 1.6 <= mle.gamma <= 2.0


def test_two_distinct_sizes():
    with pytest.raises(DomainError):
        powerlaw_fit(size_distribution([1, 1, 2]))


def test_unknown_method():
    with pytest.raises(DomainError):
        powerlaw_fit(size_distribution([1, 2, 3]), method="ks")


def test_log_bins_cover_every_component():
    sizes = discrete_powerlaw_sample(np.random.default_rng(1), 5000, 2.2)
    d = size_distribution(sizes)
    x, p, counts = log_bins(d)
    assert counts.sum() == d.total
    assert np.all(np.diff(x) > 0)
    assert np.all(p > 0)


def test_few_sizes_use_raw_points():
    d = size_distribution([1, 1, 1, 2, 3])
    x, p, _ = log_bins(d)
    assert x.tolist() == [1, 2, 3]
    assert p.tolist() == pytest.approx([0.6, 0.2, 0.2])


def test_natural_cutoff_examples():
    assert natural_cutoff(1, 100, 3) == pytest.approx(10.0)
    assert natural_cutoff(1, 100, 1.83) == pytest.approx(256.9, abs=0.1)
    assert natural_cutoff(5, 1, 2.5) == 5.0
    for g in (1.0, 0.5):
        with pytest.raises(DomainError):
            natural_cutoff(1, 100, g)


@given(st.integers(1, 10_000), st.integers(1, 10_000), st.floats(1.1, 4.0), st.floats(1.1, 4.0))
def test_natural_cutoff_monotone(m1, m2, g1, g2):
    lo_m, hi_m = sorted((m1, m2))
    lo_g, hi_g = sorted((g1, g2))
    assert natural_cutoff(1, lo_m, 2.0) <= natural_cutoff(1, hi_m, 2.0)
    assert natural_cutoff(1, 100, lo_g) >= natural_cutoff(1, 100, hi_g)
