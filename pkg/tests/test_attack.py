import math
from dataclasses import replace

import numpy as np
import pytest

from qmux.doqkd.attack import ScanAborted, attack_scan, delay_injection_scan, static_calibration
from qmux.netharness.scenario import run_scenario


def test_tau_list_must_contain_zero(noiseless_cfg):
    with pytest.raises(ValueError, match="include 0"):
        attack_scan(noiseless_cfg, [10, 20], qts_enabled=True)
    with pytest.raises(ValueError):
        attack_scan(noiseless_cfg, [], qts_enabled=True)
    with pytest.raises(ValueError):
        attack_scan(noiseless_cfg, [0, -10], qts_enabled=True)


def test_zero_anchor_without_key_aborts(noiseless_cfg):
    # a huge timing noise leaves nothing secret at tau = 0
    from qmux.photonics import DetectorParams
    noisy = DetectorParams(efficiency=1.0, jitter_fwhm=2000.0, dark_rate=0.0, dead_time=0.0)
    cfg = replace(noiseless_cfg, detectors=replace(noiseless_cfg.detectors, d5=noisy, d6=noisy))
    with pytest.raises(ScanAborted):
        attack_scan(cfg, [0, 10], qts_enabled=True)


def test_static_calibration_is_the_mean_forward_peak(noiseless_cfg):
    rep = run_scenario(noiseless_cfg)
    assert static_calibration(rep) == round(np.mean([e.t1 for e in rep.epochs]))


def test_scan_points_are_normalized_to_the_anchor(noiseless_cfg):
    scan = attack_scan(noiseless_cfg, [0, 30], qts_enabled=True)
    assert scan.points[0].normalized == 1.0
    assert scan.taus.tolist() == [0.0, 30.0]
    assert scan.points[1].normalized == pytest.approx(scan.points[1].skr / scan.points[0].skr)


def test_uncorrected_scan_agrees_with_offline_injection(noiseless_cfg):
    taus = [0, 40, 80]
    scan, base = attack_scan(noiseless_cfg, taus, qts_enabled=False, keep_baseline=True)
    ref = delay_injection_scan(noiseless_cfg, base, taus, scan.static_shift)
    assert np.allclose(scan.normalized, ref.normalized, atol=1e-12)
    assert scan.points[-1].normalized < scan.points[0].normalized
    with pytest.raises(ValueError):
        delay_injection_scan(noiseless_cfg, run_scenario(noiseless_cfg), taus, 0)
