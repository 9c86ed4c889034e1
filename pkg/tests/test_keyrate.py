"""Mutual information, security analysis and encoding optimization."""
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qmux.doqkd.encoding import CheckStatistics, EncodingParams, KeyBatch
from qmux.doqkd.metrics import (EmptyBatchError, joint_histogram, key_metrics, mutual_information,
                                plugin_bias_bound)
from qmux.doqkd.optimize import encoding_grid, optimize_encoding
from qmux.doqkd.pipeline import QkdSample, run_pipeline
from qmux.doqkd.security import (MIN_PAIRS, Baseline, EpsilonBudget, GaussianExcessNoise, NoLeakage,
                                 SecurityParams, finite_size_penalty, make_excess_noise_model,
                                 security_analysis, thermal_entropy)
from qmux.oracles import adjacent_confusion_joint, adjacent_confusion_mi
from qmux.timebase import derive_rng

BASE = Baseline(76.0)


def _batch(n, D=6, p_err=0.0, m2=None, seed=0):
    rng = derive_rng(seed, "batch")
    a = rng.integers(0, 1 << D, n).astype(np.uint16)
    b = a.copy()
    flip = rng.random(n) < p_err
    b[flip] = (b[flip] + 1) % (1 << D)
    check = None if m2 is None else CheckStatistics(n // 2, 0, m2, n // 2)
    return KeyBatch(a, b, np.arange(n), D, 1.0, check=check)


def test_key_metrics():
    m = key_metrics(_batch(1000, p_err=0.1, seed=1))
    assert m.pairs == 1000 and m.rkr == 6000.0 and 0.08 < m.qber < 0.12
    with pytest.raises(EmptyBatchError):
        key_metrics(_batch(0))


def test_joint_histogram_rejects_out_of_range():
    with pytest.raises(ValueError):
        joint_histogram([4], [0], 2)


def test_mutual_information_known_tables():
    s = np.repeat(np.arange(64, dtype=np.uint16), 3)
    assert mutual_information(joint_histogram(s, s, 6)) == 6.0
    assert mutual_information(np.ones((8, 8))) == 0.0
    with pytest.raises(ValueError):
        mutual_information(np.zeros((2, 2)))


@given(st.integers(3, 64), st.floats(0.0, 0.9))
def test_mutual_information_matches_closed_form(K, p):
    got = mutual_information(adjacent_confusion_joint(K, p, 10_000))
    assert got == pytest.approx(adjacent_confusion_mi(K, p), abs=1e-9)


@given(st.lists(st.integers(0, 3), min_size=2, max_size=40), st.lists(st.integers(0, 3), min_size=2, max_size=40))
def test_mutual_information_bounds(a, b):
    n = min(len(a), len(b))
    i = mutual_information(joint_histogram(a[:n], b[:n], 2))
    assert 0.0 <= i <= 2.0 + 1e-12


def test_plugin_bias_bound_shrinks_with_n():
    assert plugin_bias_bound(10**6, 64, 64) < plugin_bias_bound(10**5, 64, 64)
    with pytest.raises(ValueError):
        plugin_bias_bound(0, 2, 2)


def test_thermal_entropy_values():
    assert thermal_entropy(0.0) == 0.0
    assert thermal_entropy(1.0) == pytest.approx(2.0)
    assert thermal_entropy(-1.0) == 0.0


def test_excess_noise_models():
    b = _batch(10)
    assert GaussianExcessNoise(1.85)(0.0, b) == 0.0
    assert GaussianExcessNoise(1.0)(1.0, b) == pytest.approx(2.0)
    assert GaussianExcessNoise(1.0)(1e9, b) == 6.0  # capped at D
    assert NoLeakage()(5.0, b) == 0.0
    assert isinstance(make_excess_noise_model("none"), NoLeakage)
    assert make_excess_noise_model("gaussian-thermal", gain=2.0).gain == 2.0
    with pytest.raises(ValueError):
        make_excess_noise_model("mystery")


@given(st.integers(1, 10**9))
def test_finite_size_penalty_is_strictly_decreasing(n):
    eps = EpsilonBudget()
    assert finite_size_penalty(n + 1, eps) < finite_size_penalty(n, eps)


def test_finite_size_penalty_value():
    eps = EpsilonBudget(bar=1e-9, pa=1e-9)
    ref = (7 * math.sqrt(math.log2(2e9)) + 2 * math.log2(1e9)) / math.sqrt(10**6)
    assert finite_size_penalty(10**6, eps) == pytest.approx(ref)
    with pytest.raises(ValueError):
        finite_size_penalty(0, eps)


def test_security_analysis_composition():
    b = _batch(20_000, p_err=0.02, m2=BASE.variance * 1.2, seed=3)
    p = SecurityParams()
    r = security_analysis(b, p, BASE)
    assert r.excess_noise == pytest.approx(0.2)
    assert r.chi_ae == pytest.approx(thermal_entropy(1.85 * 0.2))
    assert r.delta_i == pytest.approx(0.9 * r.i_ab - r.chi_ae - r.delta_fk)
    assert r.n == 30_000 and r.coincidence_rate == 30_000.0
    assert r.skr == pytest.approx(r.delta_i * 30_000 * 0.7)
    assert r.flags == ()


def test_security_analysis_flags():
    p = SecurityParams()
    r = security_analysis(_batch(2000, m2=None), p, BASE)
    assert "no-check-data" in r.flags and r.chi_ae == 6.0 and r.delta_i == 0.0
    r = security_analysis(_batch(2000, m2=BASE.variance * 0.5), p, BASE)
    assert "variance-below-baseline" in r.flags and r.chi_ae == 0.0
    with pytest.raises(ValueError):
        security_analysis(_batch(MIN_PAIRS - 1, m2=1.0), p, BASE)


def test_asymptotic_limit():
    b = _batch(20_000, p_err=0.05, m2=BASE.variance * 1.2, seed=4)
    finite = security_analysis(b, SecurityParams(), BASE, n=10**8)
    asym = security_analysis(b, SecurityParams(finite_size=False), BASE)
    assert abs(finite.delta_i - asym.delta_i) / asym.delta_i < 0.01


def _sample(sigma, n=40_000, seed=0):
    rng = derive_rng(seed, "sample")
    enc = EncodingParams(6, 3, 110)
    ta = np.sort(rng.integers(0, n * 4 * enc.frame_length, n))
    tb = np.sort(ta + 500 + np.rint(rng.normal(0, sigma, n)).astype(np.int64))
    return QkdSample(ta, tb, 500, 1.0)


def test_pipeline_without_noise_is_error_free():
    sample = _sample(0.0)
    b = run_pipeline(sample, EncodingParams(6, 3, 110), SecurityParams(), BASE, 5)
    assert b.pairs > 0.45 * 40_000 and b.qber == 0.0
    assert b.check.pairs > 0.15 * 40_000 and b.check.errors == 0


def test_optimizer_respects_cap_and_breaks_ties():
    sample = _sample(60.0, seed=2)
    cands = encoding_grid([6], [3], [30, 110, 150])
    res = optimize_encoding(cands, 0.05, sample, SecurityParams(), BASE)
    ok = [c for c in res.table if c.qber <= 0.05]
    assert res.params in [c.params for c in ok] and not res.cap_violated
    assert max(ok, key=lambda c: c.skr).params == res.params
    # nothing passes: lowest QBER is returned and flagged
    strict = optimize_encoding(cands, 0.0, _sample(150.0, seed=3), SecurityParams(), BASE)
    assert strict.cap_violated
    assert strict.params == min(strict.table, key=lambda c: c.qber).params
    # a single candidate is returned unchanged
    one = optimize_encoding(cands[:1], 0.05, sample, SecurityParams(), BASE)
    assert one.params == cands[0] and not one.cap_violated
    with pytest.raises(ValueError):
        optimize_encoding([], 0.05, sample, SecurityParams(), BASE)


def test_optimizer_tie_break_prefers_smaller_parameters():
    sample = _sample(0.0, n=3000, seed=5)
    # NoLeakage + identical batches across bin widths below the noise floor gives equal scores
    p = SecurityParams(excess_noise_model=NoLeakage(), finite_size=False)
    res = optimize_encoding(encoding_grid([6], [3], [110, 100]), 1.0, sample, p, BASE)
    scores = {c.params.bin_width: c.skr for c in res.table}
    if scores[100] == scores[110]:
        assert res.params.bin_width == 100
    else:
        assert res.params.bin_width == max(scores, key=scores.get)
