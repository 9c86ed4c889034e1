import numpy as np
import pytest
from hypothesis import given, strategies as st

from qmux.photonics import (IDEAL_DETECTOR, DetectorParams, SourceParams, coincidence_fwhm, detect,
                            generate_pairs, route, thin)
from qmux.timebase import FWHM_PER_SIGMA, TagStream, derive_rng


def _dead_time_oracle(t, dead):
    kept, last = [], None
    for x in t:
        if last is None or x - last >= dead:
            kept.append(x)
            last = x
    return kept


def test_pair_count_and_correlation_width():
    src = SourceParams(pair_rate=2e6, correlation_sigma=30.0)
    p = generate_pairs(src, 0.5, derive_rng(1, "src"), start=10**9, first_pair_id=100)
    assert abs(len(p) - 1e6) < 5 * np.sqrt(1e6)
    assert p.idler.is_sorted() and p.signal.is_sorted()
    assert p.idler.t.min() >= 10**9 and p.idler.t.max() < 10**9 + 5 * 10**11
    # match arms by pair id
    order = np.argsort(p.signal.pair_id)
    d = p.signal.t[order] - p.idler.t[np.argsort(p.idler.pair_id)]
    assert abs(d.std() - 30.0) < 0.2 and abs(d.mean()) < 0.2
    assert p.idler.pair_id[0] == 100


def test_zero_correlation_width_gives_identical_arms():
    p = generate_pairs(SourceParams(1e5), 0.01, derive_rng(2, "src"))
    assert np.array_equal(p.signal.t, p.idler.t)


def test_emission_records_are_time_ordered():
    p = generate_pairs(SourceParams(1e4, 5.0), 0.001, derive_rng(3, "src"))
    recs = list(p.records())
    assert len(recs) == 2 * len(p)
    assert all(a.t_emit <= b.t_emit for a, b in zip(recs, recs[1:]))


def test_invalid_parameters():
    with pytest.raises(ValueError):
        SourceParams(0.0)
    with pytest.raises(ValueError):
        DetectorParams(efficiency=1.5)
    with pytest.raises(ValueError):
        DetectorParams(dead_time=-1)
    with pytest.raises(ValueError):
        generate_pairs(SourceParams(1.0), 0.0, derive_rng(0))


def test_ideal_detector_is_identity():
    s = TagStream.from_times(np.arange(0, 10**6, 997))
    out = detect(s, IDEAL_DETECTOR, derive_rng(0, "det"))
    assert np.array_equal(out.t, s.t)


def test_efficiency_and_jitter():
    s = TagStream.from_times(np.arange(200_000, dtype=np.int64) * 10**6)
    det = DetectorParams(efficiency=0.6, jitter_fwhm=53.74, dark_rate=0.0, dead_time=0.0)
    out = detect(s, det, derive_rng(0, "det"))
    assert abs(len(out) / len(s) - 0.6) < 0.005
    resid = out.t - np.round(out.t / 1e6).astype(np.int64) * 10**6
    assert abs(resid.std() - 53.74 / FWHM_PER_SIGMA) < 0.3


def test_dark_counts_fill_the_window():
    det = DetectorParams(efficiency=1.0, dark_rate=1e5, dead_time=0.0)
    out = detect(TagStream.empty(), det, derive_rng(1, "det"), window=(0, 10**12))
    assert abs(len(out) - 1e5) < 5 * np.sqrt(1e5)
    assert (out.pair_id == -1).all() and out.is_sorted()


def test_clip_drops_clicks_outside_the_window():
    s = TagStream.from_times([5, 50, 95])
    det = DetectorParams(dark_rate=0.0, dead_time=0.0, jitter_fwhm=0.0)
    assert detect(s, det, derive_rng(0), window=(10, 90)).t.tolist() == [50]
    assert detect(s, det, derive_rng(0), window=(10, 90), clip=False).t.tolist() == [5, 50, 95]


@given(st.lists(st.integers(0, 10_000), max_size=80), st.integers(1, 500))
def test_dead_time_matches_sequential_oracle(times, dead):
    s = TagStream.from_times(times)
    det = DetectorParams(efficiency=1.0, jitter_fwhm=0.0, dark_rate=0.0, dead_time=float(dead))
    assert detect(s, det, derive_rng(0)).t.tolist() == _dead_time_oracle(sorted(times), dead)


def test_unsorted_input_is_rejected():
    with pytest.raises(ValueError):
        detect(TagStream(np.array([3, 1]), np.array([0, 1])), IDEAL_DETECTOR, derive_rng(0))


def test_route_and_thin_fractions():
    s = TagStream.from_times(np.arange(100_000))
    a, b = route(s, 0.3, derive_rng(0, "bs"))
    assert len(a) + len(b) == len(s) and abs(len(a) / len(s) - 0.3) < 0.01
    assert abs(len(thin(s, 0.25, derive_rng(1))) / len(s) - 0.25) < 0.01
    assert len(thin(s, 1.0, derive_rng(1))) == len(s)
    with pytest.raises(ValueError):
        route(s, 1.2, derive_rng(0))


def test_coincidence_fwhm_adds_in_quadrature():
    assert coincidence_fwhm(3.0, 4.0) == pytest.approx(5.0)
    # two detectors of 53.74 ps plus link broadening give the 83.6 ps coincidence width
    assert coincidence_fwhm(53.74, 53.74, 14.76 * FWHM_PER_SIGMA) == pytest.approx(83.6, abs=0.05)
