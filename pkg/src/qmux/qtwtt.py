"""Quantum two-way time transfer: offsets from bidirectional coincidence peaks, servo, stability.

Sign conventions: t1 is the forward (Alice source -> Bob) peak position of
t_Bob - t_Alice, t2 the backward peak of t_Alice - t_Bob. With a clock offset
t0 = (Bob clock - Alice clock), t1 = delay_AB + t0 and t2 = delay_BA - t0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .channel import AttackParams
from .coincidence import NoPeakError, PeakFit
from .timebase import loglog_slope, tdev_curve, tdev_weights

MIN_STABILITY_EPOCHS = 30


@dataclass(frozen=True)
class TwttMeasurement:
    epoch_index: int
    t1: float
    t2: float
    t0_est: float
    link_delay_est: float
    t0_uncertainty: float


@dataclass(frozen=True)
class ServoState:
    """Phase-trimmer state: total correction (ps) subtracted from Bob's timescale."""

    accumulated_correction: float = 0.0
    gain: float = 1.0
    epoch_period: float = 5.0

    def __post_init__(self):
        if not 0.0 < self.gain <= 1.0:
            raise ValueError(f"servo gain must lie in (0, 1], got {self.gain}")
        if not self.epoch_period > 0:
            raise ValueError("epoch_period must be > 0")


def measurement_from_centers(t1: float, t2: float, epoch: int = 0,
                             u1: float = 0.0, u2: float = 0.0) -> TwttMeasurement:
    return TwttMeasurement(
        epoch_index=epoch,
        t1=t1,
        t2=t2,
        t0_est=(t1 - t2) / 2,
        link_delay_est=(t1 + t2) / 2,
        t0_uncertainty=0.5 * math.sqrt(u1 * u1 + u2 * u2),
    )


def extract_offsets(fit_ab: PeakFit | None, fit_ba: PeakFit | None, epoch: int) -> TwttMeasurement:
    """Clock offset and link delay from the forward and backward peak fits.

    Raises NoPeakError when either direction has no fit, so the caller can skip
    and flag the epoch.
    """
    if fit_ab is None or fit_ba is None:
        missing = "forward" if fit_ab is None else "backward"
        raise NoPeakError(f"epoch {epoch}: no {missing} coincidence peak")
    return measurement_from_centers(fit_ab.center, fit_ba.center, epoch,
                                    fit_ab.center_uncertainty, fit_ba.center_uncertainty)


def servo_update(state: ServoState, m: TwttMeasurement) -> ServoState:
    """Proportional step: correction += gain * measured offset."""
    return replace(state, accumulated_correction=state.accumulated_correction + state.gain * m.t0_est)


def corrected_arrival_time(bob_reference: float, link_delay_est: float) -> float:
    """Expected arrival of a forward photon on Bob's servo-steered timescale.

    Under a forward delay attack the steered reference is early by tau_eve/2
    and the link estimate long by tau_eve/2, so the sum does not move.
    """
    return bob_reference + link_delay_est


def expected_centers(link_delay: float, true_offset: float,
                     attack: AttackParams | None = None) -> tuple[float, float]:
    """Noiseless (t1, t2) for a symmetric link, a clock offset and an optional attack."""
    fwd = attack.delay_for("forward") if attack else 0.0
    bwd = attack.delay_for("backward") if attack else 0.0
    return link_delay + fwd + true_offset, link_delay + bwd - true_offset


@dataclass(frozen=True)
class StabilityReport:
    taus: np.ndarray
    tdev: np.ndarray
    std: float
    slope: float | None

    def rows(self):
        return zip(self.taus.tolist(), self.tdev.tolist())


def stability_report(measurements: Sequence[TwttMeasurement], epoch_period: float,
                     multiples: Sequence[int] | None = None) -> StabilityReport:
    """TDEV curve and standard deviation of the offset series.

    Epochs must be consecutive; failed epochs should be excluded by the caller
    only if that keeps the cadence (otherwise pass the gap-free run).
    """
    if len(measurements) < MIN_STABILITY_EPOCHS:
        raise ValueError(f"need at least {MIN_STABILITY_EPOCHS} epochs, have {len(measurements)}")
    x = np.array([m.t0_est for m in measurements], dtype=np.float64)
    taus, devs = tdev_curve(x, epoch_period, multiples)
    slope = None
    if taus.size >= 2 and np.count_nonzero(devs > 0) >= 2:
        slope = loglog_slope(taus, devs, tdev_weights(x.size, np.round(taus / epoch_period)))
    return StabilityReport(taus=taus, tdev=devs, std=float(np.std(x)), slope=slope)
