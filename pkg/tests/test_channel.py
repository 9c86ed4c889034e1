import numpy as np
import pytest

from qmux.channel import AttackParams, DriftSpec, LinkState, delay_at, propagate
from qmux.timebase import TagStream, derive_rng


def _lossless(**kw):
    return LinkState(base_delay=1000.0, loss_transmittance=1.0, **kw)


def test_constant_delay():
    s = TagStream.from_times([0, 10, 20])
    out = propagate(s, _lossless(), None, "forward", derive_rng(0))
    assert out.t.tolist() == [1000, 1010, 1020]


def test_attack_only_hits_its_direction():
    s = TagStream.from_times([0, 10])
    atk = AttackParams(tau_eve=70.0, direction="forward")
    assert propagate(s, _lossless(), atk, "forward", derive_rng(0)).t.tolist() == [1070, 1080]
    assert propagate(s, _lossless(), atk, "backward", derive_rng(0)).t.tolist() == [1000, 1010]


def test_attack_does_not_change_random_draws():
    s = TagStream.from_times(np.arange(0, 10**7, 1000))
    link = LinkState(base_delay=1000.0, loss_transmittance=0.3, residual_broadening_sigma=10.0)
    a = propagate(s, link, None, "forward", derive_rng(4, "l"))
    b = propagate(s, link, AttackParams(50.0), "forward", derive_rng(4, "l"))
    assert np.array_equal(a.pair_id, b.pair_id)
    assert np.array_equal(b.t - a.t, np.full(len(a), 50))


def test_loss_fraction_and_broadening():
    s = TagStream.from_times(np.arange(200_000, dtype=np.int64) * 10**5)
    link = LinkState(base_delay=1.0, loss_transmittance=0.15, residual_broadening_sigma=14.76)
    out = propagate(s, link, None, "backward", derive_rng(1))
    assert abs(len(out) / len(s) - 0.15) < 0.005
    resid = out.t - np.round(out.t / 1e5).astype(np.int64) * 10**5
    assert abs(resid.std() - 14.76) < 0.3


def test_sinusoidal_drift_peak_to_peak():
    link = LinkState(base_delay=1000.0, drift=DriftSpec(amplitude=40.0, period=100.0))
    d = delay_at(link, [0.0, 25.0, 50.0, 100.0])
    assert d.tolist() == pytest.approx([1000.0, 1020.0, 1040.0, 1000.0])


def test_random_walk_drift_is_reproducible():
    link = LinkState(base_delay=10**6, drift=DriftSpec(amplitude=5.0, period=50.0, shape="random-walk", seed=3))
    t = np.linspace(0, 500, 11)
    assert np.array_equal(delay_at(link, t), delay_at(link, t))
    assert delay_at(link, [0.0])[0] == 10**6


def test_validation():
    with pytest.raises(ValueError):
        AttackParams(tau_eve=-1.0)
    with pytest.raises(ValueError):
        AttackParams(direction="sideways")
    with pytest.raises(ValueError):
        LinkState(loss_transmittance=2.0)
    with pytest.raises(ValueError):
        DriftSpec(shape="square")
    with pytest.raises(ValueError):
        propagate(TagStream.from_times([1]), _lossless(), None, "up", derive_rng(0))
