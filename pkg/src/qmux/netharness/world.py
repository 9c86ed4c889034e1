"""Physical layer of one epoch: emission, routing, propagation, detection, clock reads.

Every random draw comes from a generator keyed by (seed, purpose, epoch), so
epoch k of two runs that differ only in the attack or servo state uses the
same draws.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..channel import delay_at, propagate
from ..photonics import detect, generate_pairs, thin
from ..timebase import PS_PER_S, TagStream, derive_rng, to_local
from .config import ScenarioConfig

_EBS2_ID_BASE = 1 << 62


@dataclass(frozen=True, eq=False)
class EpochStreams:
    """Local-time tag streams of one epoch, per node, keyed by detector (D1..D6)."""

    epoch: int
    alice: dict[str, TagStream]
    bob: dict[str, TagStream]
    true_offset: float  # Bob minus Alice clock at epoch middle, after steering (ps)
    true_link_delay: float  # one-way delay at epoch middle without attack (ps)


def epoch_bounds(cfg: ScenarioConfig, k: int) -> tuple[int, int]:
    p = int(round(cfg.epoch_period * PS_PER_S))
    return k * p, (k + 1) * p


def attack_for(cfg: ScenarioConfig, k: int):
    if cfg.attack is None or k < cfg.attack_start_epoch:
        return None
    return cfg.attack


def simulate_epoch(cfg: ScenarioConfig, k: int, bob_steer: float, attack=...) -> EpochStreams:
    """Generate, route, propagate and detect both sources for epoch ``k``.

    ``bob_steer`` is the servo correction (ps) subtracted from Bob's clock.
    ``attack`` overrides the configured attack for this epoch.
    """
    seed = cfg.seed
    start, stop = epoch_bounds(cfg, k)
    if attack is ...:
        attack = attack_for(cfg, k)
    link = cfg.link
    nominal = int(round(link.base_delay))
    local_win = (start, stop)
    remote_win = (start + nominal, stop + nominal)
    det = cfg.detectors

    def rng(*labels):
        return derive_rng(seed, *labels, k)

    first_id = k << 32
    ebs1 = generate_pairs(cfg.ebs1, cfg.epoch_period, rng("ebs1"), start, first_pair_id=first_id)
    ebs2 = generate_pairs(cfg.ebs2, cfg.epoch_period, rng("ebs2"), start,
                          first_pair_id=_EBS2_ID_BASE + first_id)

    # forward source: idler stays with Alice, signal crosses the link to Bob
    u_alice = rng("route-alice").random(len(ebs1.idler))
    to_time = u_alice < cfg.routing.alice_time_fraction
    a_time, a_freq = ebs1.idler.select(to_time), ebs1.idler.select(~to_time)
    fwd = propagate(ebs1.signal, link, attack, "forward", rng("link-forward"))
    mid_s = (start + stop) / 2 / PS_PER_S
    fwd = thin(fwd, cfg.modulation.factor(mid_s), rng("modulation"))
    if cfg.routing.mode == "matched":
        # idler ids are consecutive from first_id in emission order
        u_bob = u_alice[fwd.pair_id - first_id]
    else:
        u_bob = rng("route-bob").random(len(fwd))
    to_time = u_bob < cfg.routing.bob_time_fraction
    b_time, b_freq = fwd.select(to_time), fwd.select(~to_time)
    # backward source: idler stays with Bob, signal crosses to Alice
    bwd = propagate(ebs2.signal, link, attack, "backward", rng("link-backward"))

    def click(photons, name, window, node):
        # no clipping: a photon belongs to the epoch it was emitted in
        return detect(photons, det[name], rng("det", name), window, name.upper(), node, clip=False)

    true_clicks = {
        "D1": click(a_freq, "d1", local_win, "alice"),
        "D5": click(a_time, "d5", local_win, "alice"),
        "D4": click(bwd, "d4", remote_win, "alice"),
        "D2": click(b_freq, "d2", remote_win, "bob"),
        "D6": click(b_time, "d6", remote_win, "bob"),
        "D3": click(ebs2.idler, "d3", local_win, "bob"),
    }
    alice, bob = {}, {}
    for name in ("D1", "D4", "D5"):
        s = true_clicks[name]
        alice[name] = s.with_times(to_local(cfg.alice_clock, s.t, rng("clock", name)))
    for name in ("D2", "D3", "D6"):
        s = true_clicks[name]
        bob[name] = s.with_times(to_local(cfg.bob_clock, s.t, rng("clock", name), steer=bob_steer))

    mid = np.array([(start + stop) // 2], dtype=np.int64)
    offset = float(cfg.bob_clock.deterministic_error(mid)[0] - cfg.alice_clock.deterministic_error(mid)[0]) - bob_steer
    return EpochStreams(k, alice, bob, offset, float(delay_at(link, [mid_s])[0]))
