"""Bidirectional fiber link: slow delay drift, loss, residual broadening, delay attack."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .timebase import TagStream, random_walk, seconds, shift_instants

Direction = Literal["forward", "backward"]  # forward = Alice -> Bob
DIRECTIONS = ("forward", "backward")


@dataclass(frozen=True)
class DriftSpec:
    """Slow one-way delay wander.

    For ``sinusoid`` the delay is base + amplitude * (1 - cos(2 pi t / period)) / 2,
    so ``amplitude`` is the peak-to-peak excursion and half a period sweeps it
    fully. For ``random-walk`` the excursion after one period has std ``amplitude``.
    """

    amplitude: float = 0.0  # ps
    period: float = 3600.0  # s
    shape: Literal["sinusoid", "random-walk"] = "sinusoid"
    seed: int = 0

    def __post_init__(self):
        if self.shape not in ("sinusoid", "random-walk"):
            raise ValueError(f"unknown drift shape {self.shape!r}")
        if not self.amplitude >= 0:
            raise ValueError(f"drift amplitude must be >= 0, got {self.amplitude}")
        if not self.period > 0:
            raise ValueError(f"drift period must be > 0, got {self.period}")


@dataclass(frozen=True)
class LinkState:
    base_delay: float = 588_000_000.0  # ps, ~120 km of fiber
    drift: DriftSpec = field(default_factory=DriftSpec)
    loss_transmittance: float = 0.015
    residual_broadening_sigma: float = 0.0  # ps

    def __post_init__(self):
        if not self.base_delay >= 0:
            raise ValueError(f"base_delay must be >= 0, got {self.base_delay}")
        if not 0.0 <= self.loss_transmittance <= 1.0:
            raise ValueError(f"loss_transmittance must lie in [0, 1], got {self.loss_transmittance}")
        if not self.residual_broadening_sigma >= 0:
            raise ValueError("residual_broadening_sigma must be >= 0")


@dataclass(frozen=True)
class AttackParams:
    """Extra delay inserted by an eavesdropper on one direction of the link."""

    tau_eve: float = 0.0  # ps
    direction: Direction = "forward"

    def __post_init__(self):
        if not self.tau_eve >= 0:
            raise ValueError(f"tau_eve must be >= 0, got {self.tau_eve}")
        if self.direction not in DIRECTIONS:
            raise ValueError(f"direction must be one of {DIRECTIONS}, got {self.direction!r}")

    def delay_for(self, direction: Direction) -> float:
        return self.tau_eve if direction == self.direction else 0.0


def delay_at(link: LinkState, t) -> np.ndarray:
    """One-way link delay (ps) at true time ``t`` in seconds. Same for both directions."""
    t = np.asarray(t, dtype=np.float64)
    d = link.drift
    if d.amplitude == 0.0:
        out = np.full(t.shape, float(link.base_delay))
    elif d.shape == "sinusoid":
        out = link.base_delay + 0.5 * d.amplitude * (1.0 - np.cos(2.0 * np.pi * t / d.period))
    else:
        out = link.base_delay + random_walk(d.seed, d.amplitude / np.sqrt(d.period), t)
    if out.size and not np.all(out > 0):
        raise ValueError("link delay became non-positive; increase base_delay or reduce drift")
    return out


def propagate(tags: TagStream, link: LinkState, attack: AttackParams | None,
              direction: Direction, rng: np.random.Generator) -> TagStream:
    """Carry photons (true emission instants) across the link in ``direction``.

    Each photon survives with probability ``loss_transmittance`` and is delayed
    by delay_at(emission) + the attack delay on the attacked direction +
    N(0, residual_broadening_sigma). Random draws do not depend on the
    delay values, so runs differing only in the attack stay aligned.
    """
    if direction not in DIRECTIONS:
        raise ValueError(f"direction must be one of {DIRECTIONS}, got {direction!r}")
    if not tags.is_sorted():
        raise ValueError("tags must be sorted")
    kept = tags.select(rng.random(len(tags)) < link.loss_transmittance)
    delay = delay_at(link, seconds(kept.t))
    if attack is not None:
        delay = delay + attack.delay_for(direction)
    if link.residual_broadening_sigma > 0:
        delay = delay + rng.normal(0.0, link.residual_broadening_sigma, size=len(kept))
    return kept.with_times(shift_instants(kept.t, delay))
