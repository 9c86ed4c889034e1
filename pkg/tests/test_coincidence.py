import numpy as np
import pytest
from hypothesis import given, strategies as st

from qmux.coincidence import (Histogram, NoPeakError, coincidence_metrics, cross_correlate,
                              fit_gaussian_peak)
from qmux.oracles import brute_correlation
from qmux.timebase import TagStream, derive_rng

sorted_tags = st.lists(st.integers(-3000, 3000), max_size=50).map(lambda v: np.array(sorted(v), dtype=np.int64))


@given(sorted_tags, sorted_tags, st.integers(-500, 500), st.integers(1, 400), st.integers(1, 64))
def test_matches_brute_force(a, b, center, half, bw):
    h = cross_correlate(a, b, float(center), float(half), bw)
    assert np.array_equal(h.counts, brute_correlation(a, b, h.origin, bw, h.n_bins))


def test_half_open_bins():
    h = cross_correlate([0], [10, 20], 15.0, 5.0, 5)
    # window [10, 20): 10 is in, 20 is out
    assert h.origin == 10 and h.counts.tolist() == [1, 0]
    assert h.edges.tolist() == [10, 15, 20]
    assert h.centers.tolist() == [12.0, 17.0]


def test_accepts_tagstreams_and_rejects_unsorted():
    h = cross_correlate(TagStream.from_times([0]), TagStream.from_times([3]), 0.0, 10.0)
    assert h.total() == 1
    with pytest.raises(ValueError):
        cross_correlate(np.array([2, 1]), np.array([0]), 0.0, 10.0)
    with pytest.raises(ValueError):
        cross_correlate([0], [0], 0.0, 0.0)


def _gauss_pair(n, sigma, delay, seed, bg_rate=0.0):
    rng = derive_rng(seed, "peak")
    a = np.sort(rng.integers(0, 10**11, n))
    b = a + delay + np.rint(rng.normal(0, sigma, n)).astype(np.int64)
    if bg_rate:
        b = np.concatenate([b, rng.integers(0, 10**11, int(bg_rate * 0.1))])
    return a, np.sort(b)


@pytest.mark.parametrize("bw", [1, 2, 4, 8, 16])
def test_fit_recovers_center_and_width(bw):
    sigma = 83.6 / 2.3548
    a, b = _gauss_pair(5000, sigma, 588_000_123, seed=bw, bg_rate=2e5)
    fit = fit_gaussian_peak(cross_correlate(a, b, 588_000_000, 4096, bw))
    assert abs(fit.center - 588_000_123) < 4 * sigma / np.sqrt(5000) + 0.3
    assert abs(fit.fwhm - 83.6) < 6.0
    assert fit.center_uncertainty == pytest.approx(sigma / np.sqrt(5000), rel=0.2)


def test_single_bin_peak_is_exact():
    a = np.arange(0, 10**9, 10**5, dtype=np.int64)
    fit = fit_gaussian_peak(cross_correlate(a, a + 42, 0.0, 512.0, 1))
    assert fit.center == 42.0


def test_flat_histogram_has_no_peak():
    with pytest.raises(NoPeakError):
        fit_gaussian_peak(Histogram(1, 0, np.full(200, 7)))
    with pytest.raises(NoPeakError):
        fit_gaussian_peak(Histogram(1, 0, np.zeros(50, dtype=np.int64)))
    # mis-centered window: only accidentals
    a, b = _gauss_pair(3000, 30.0, 10**6, seed=1, bg_rate=5e5)
    with pytest.raises(NoPeakError):
        fit_gaussian_peak(cross_correlate(a, b, 0.0, 2000.0, 4))


def test_car_from_flat_background():
    counts = np.full(100, 2, dtype=np.int64)
    counts[50] += 40
    h = Histogram(20, -1000, counts)
    fit = fit_gaussian_peak(h)
    assert fit.center == 9.5 and fit.background == 2.0
    m = coincidence_metrics(h, fit, 100.0)
    assert m.accidentals_in_window == pytest.approx(10.0)
    assert m.true_coincidences == pytest.approx(40.0)
    assert m.car == pytest.approx(4.0)
    with pytest.raises(ValueError):
        coincidence_metrics(h, fit, 0.0)


def test_histogram_validation():
    with pytest.raises(ValueError):
        Histogram(0, 0, np.zeros(3))
    with pytest.raises(ValueError):
        Histogram(1, 0, np.array([1, -1]))
