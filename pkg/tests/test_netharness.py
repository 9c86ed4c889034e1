import math

import numpy as np
import pytest
from dataclasses import replace
from hypothesis import given, strategies as st

from qmux.netharness import messages, wire
from qmux.netharness.messages import BatchConfirm, SiftAnnounce, TagDigest, TwttReport, messages_equal
from qmux.netharness.scenario import compress, run_scenario
from qmux.netharness.transport import FaultPlan, TransportError, TransportTimeout, make_link
from qmux.netharness.world import simulate_epoch

i64 = st.integers(-2**63, 2**63 - 1)
arrays = st.lists(i64, max_size=40).map(lambda v: np.array(v, dtype=np.int64))
text = st.text(max_size=12)
floats = st.floats(allow_nan=True, allow_infinity=True)

any_message = st.one_of(
    st.builds(TagDigest, i64, text, text, arrays, i64),
    st.builds(TwttReport, i64, text, text, st.booleans(), floats, floats, floats),
    st.builds(SiftAnnounce, i64, text, arrays, arrays),
    st.builds(BatchConfirm, i64, text, i64, floats, i64, i64, floats, i64),
)


@given(any_message)
def test_wire_round_trip(msg):
    assert messages_equal(wire.decode(wire.encode(msg)), msg)


def test_wire_rejects_damage():
    raw = wire.encode(TwttReport(1, "bob", "forward", True, 1.0, 0.1, 80.0))
    with pytest.raises(wire.WireError):
        wire.decode(raw[:-3])
    with pytest.raises(wire.WireError):
        wire.decode(raw + b"\x00")
    with pytest.raises(wire.WireError):
        wire.decode(bytes([9]) + raw[1:])


def test_sift_announcement_carries_no_slot_information():
    names = set(messages.message_fields(SiftAnnounce(0, "a", np.zeros(1), np.zeros(1))))
    assert names == {"epoch", "sender", "frames", "bins"}


@pytest.mark.parametrize("kind", ["inprocess", "socket"])
def test_link_delivers_in_order_and_buffers_other_kinds(kind):
    with make_link(kind, latency=0.001) as link:
        link.start_epoch(0)
        link.alice.send(TwttReport(0, "alice", "backward", True, 1.0, 0.1, 80.0))
        link.alice.send(TagDigest(0, "alice", "D1", np.arange(5)))
        d = link.bob.recv("TagDigest", 0, 5.0)
        r = link.bob.recv("TwttReport", 0, 5.0)
        assert d.t.tolist() == [0, 1, 2, 3, 4] and r.center == 1.0


@pytest.mark.parametrize("kind", ["inprocess", "socket"])
def test_stale_epochs_are_discarded(kind):
    with make_link(kind) as link:
        link.alice.send(TwttReport(0, "alice", "backward", True, 1.0, 0.1, 80.0))
        link.alice.send(TwttReport(1, "alice", "backward", True, 2.0, 0.1, 80.0))
        link.start_epoch(1)
        assert link.bob.recv("TwttReport", 1, 5.0).center == 2.0


@pytest.mark.parametrize("kind", ["inprocess", "socket"])
def test_dropped_message_times_out(kind):
    faults = FaultPlan(drop=frozenset({(0, "alice", "TagDigest")}))
    with make_link(kind, faults=faults) as link:
        link.alice.send(TagDigest(0, "alice", "D1", np.arange(3)))
        with pytest.raises(TransportTimeout):
            link.bob.recv("TagDigest", 0, 0.2)


@pytest.mark.parametrize("kind", ["inprocess", "socket"])
def test_disconnect_then_reconnect(kind):
    faults = FaultPlan(disconnect=frozenset({(0, "alice")}))
    with make_link(kind, faults=faults) as link:
        link.start_epoch(0)
        link.alice.send(TagDigest(0, "alice", "D1", np.arange(3)))
        with pytest.raises(TransportError):
            link.alice.send(TagDigest(0, "alice", "D1", np.arange(3)))
        with pytest.raises(TransportError):
            for _ in range(3):
                link.bob.recv("TagDigest", 0, 2.0)
        link.start_epoch(1)
        link.alice.send(TagDigest(1, "alice", "D1", np.arange(2)))
        assert link.bob.recv("TagDigest", 1, 5.0).t.tolist() == [0, 1]


def test_unknown_transport():
    with pytest.raises(ValueError):
        make_link("carrier-pigeon")


def test_world_is_reproducible_and_attack_aligned(noiseless_cfg):
    a = simulate_epoch(noiseless_cfg, 1, 0.0)
    b = simulate_epoch(noiseless_cfg, 1, 0.0)
    for name in a.alice:
        assert a.alice[name].equals(b.alice[name])
    from qmux.channel import AttackParams
    c = simulate_epoch(noiseless_cfg, 1, 0.0, attack=AttackParams(40.0))
    assert np.array_equal(c.bob["D6"].t - a.bob["D6"].t, np.full(len(a.bob["D6"]), 40))
    assert c.alice["D5"].equals(a.alice["D5"])
    assert a.true_offset == 10.0


def test_noiseless_scenario(noiseless_cfg):
    rep = run_scenario(noiseless_cfg)
    e0, e1 = rep.epochs
    assert e0.t0_est == 10.0 and e1.t0_est == 0.0
    assert e0.link_delay_est == e1.link_delay_est == noiseless_cfg.link.base_delay
    assert e1.servo_correction == 10.0 and e1.true_offset == 0.0
    assert all(e.ok and e.qber == 0.0 and e.pairs > 10_000 for e in rep.epochs)
    assert rep.pooled.pairs == sum(e.pairs for e in rep.epochs)


def test_latency_does_not_change_the_report(noiseless_cfg):
    cfg = replace(noiseless_cfg, duration=2.0)
    assert run_scenario(cfg).digest() == run_scenario(cfg, latency=0.01).digest()


def test_lost_message_fails_one_epoch_only(noiseless_cfg):
    cfg = replace(noiseless_cfg, duration=3.0)
    seen = []
    faults = FaultPlan(drop=frozenset({(1, "alice", "SiftAnnounce")}))
    rep = run_scenario(cfg, faults=faults, timeout=0.5, progress=seen.append)
    assert [e.ok for e in rep.epochs] == [True, False, True]
    assert "SiftAnnounce" in rep.epochs[1].failure
    assert rep.batches[1] is None and len(seen) == 3


def test_dropped_connection_recovers_next_epoch(noiseless_cfg):
    cfg = replace(noiseless_cfg, duration=3.0)
    faults = FaultPlan(disconnect=frozenset({(1, "bob")}))
    rep = run_scenario(cfg, transport="socket", faults=faults, timeout=2.0)
    assert [e.ok for e in rep.epochs] == [True, False, True]
    assert rep.epochs[2].t0_est == 0.0


def test_compress_targets_coincidences(common_cfg):
    cfg = compress(common_cfg, 5000, epoch_period=5.0, duration=10.0)
    assert not cfg.qkd.enabled and cfg.epoch_period == 5.0 and cfg.n_epochs == 2
    rep = run_scenario(cfg)
    assert all(e.ok for e in rep.epochs)
    ep = simulate_epoch(cfg, 0, 0.0)
    from qmux.coincidence import cross_correlate, fit_gaussian_peak
    h = cross_correlate(ep.alice["D1"].t, ep.bob["D2"].t, cfg.link.base_delay, 2048, 1)
    peak = abs(h.centers - fit_gaussian_peak(h).center) < 3 * 83.6
    assert abs(h.counts[peak].sum() - 5000) < 400
    assert math.isfinite(rep.epochs[1].fwhm_forward)
