"""Secure information per coincidence: reconciliation, Holevo bound, finite-size penalty."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np

from ..timebase import FWHM_PER_SIGMA
from .encoding import KeyBatch
from .metrics import batch_mutual_information

MIN_PAIRS = 1000


class HolevoModel(Protocol):
    """Maps the excess timing noise seen on the check subset to chi(A;E) in bits/coincidence."""

    def __call__(self, excess_noise: float, batch: KeyBatch) -> float: ...


def thermal_entropy(x: float) -> float:
    """Von Neumann entropy (bits) of a thermal mode with mean photon number ``x``."""
    if x <= 0:
        return 0.0
    return (x + 1.0) * math.log2(x + 1.0) - x * math.log2(x)


@dataclass(frozen=True)
class GaussianExcessNoise:
    """chi = g(gain * excess_noise), g the thermal-mode entropy.

    ``excess_noise`` is measured/baseline correlation variance - 1. ``gain``
    scales the noise into equivalent thermal photons for the eavesdropper.
    """

    gain: float = 1.85

    def __post_init__(self):
        if not self.gain >= 0:
            raise ValueError("gain must be >= 0")

    def __call__(self, excess_noise: float, batch: KeyBatch) -> float:
        return min(float(batch.D), thermal_entropy(self.gain * max(0.0, excess_noise)))


@dataclass(frozen=True)
class NoLeakage:
    def __call__(self, excess_noise: float, batch: KeyBatch) -> float:
        return 0.0


EXCESS_NOISE_MODELS: dict[str, Callable[..., HolevoModel]] = {
    "gaussian-thermal": GaussianExcessNoise,
    "none": NoLeakage,
}


def make_excess_noise_model(name: str, **kwargs) -> HolevoModel:
    try:
        factory = EXCESS_NOISE_MODELS[name]
    except KeyError:
        raise ValueError(f"unknown excess-noise model {name!r}; known: {sorted(EXCESS_NOISE_MODELS)}") from None
    return factory(**kwargs)


@dataclass(frozen=True)
class EpsilonBudget:
    ver: float = 1e-9
    pa: float = 1e-9
    pe: float = 1e-10
    bar: float = 1e-9
    n_pe: int = 10

    def __post_init__(self):
        for name in ("ver", "pa", "pe", "bar"):
            if not getattr(self, name) > 0:
                raise ValueError(f"epsilon.{name} must be > 0")
        if self.n_pe < 1:
            raise ValueError("epsilon.n_pe must be >= 1")

    @property
    def total(self) -> float:
        return self.ver + self.pa + self.n_pe * self.pe + self.bar


@dataclass(frozen=True)
class SecurityParams:
    beta: float = 0.9
    epsilon: EpsilonBudget = field(default_factory=EpsilonBudget)
    key_fraction: float = 0.7
    excess_noise_model: HolevoModel = field(default_factory=GaussianExcessNoise)
    finite_size: bool = True

    def __post_init__(self):
        if not 0.0 < self.beta <= 1.0:
            raise ValueError(f"beta must lie in (0, 1], got {self.beta}")
        if not 0.0 < self.key_fraction <= 1.0:
            raise ValueError(f"key_fraction must lie in (0, 1], got {self.key_fraction}")


@dataclass(frozen=True)
class Baseline:
    """Back-to-back correlation width that the measured check-subset variance is compared to."""

    fwhm: float  # ps

    @property
    def variance(self) -> float:
        return (self.fwhm / FWHM_PER_SIGMA) ** 2

    @property
    def sigma(self) -> float:
        return self.fwhm / FWHM_PER_SIGMA


@dataclass(frozen=True)
class SecurityReport:
    i_ab: float
    chi_ae: float
    delta_fk: float
    delta_i: float
    skr: float
    n: int
    coincidence_rate: float
    excess_noise: float
    flags: tuple[str, ...] = ()


def finite_size_penalty(n: int, eps: EpsilonBudget) -> float:
    """(7 sqrt(log2(2/eps_bar)) + 2 log2(1/eps_pa)) / sqrt(n), bits per coincidence."""
    if n <= 0:
        raise ValueError("n must be > 0")
    return (7.0 * math.sqrt(math.log2(2.0 / eps.bar)) + 2.0 * math.log2(1.0 / eps.pa)) / math.sqrt(n)


def timing_window(enc_slot_width: int, baseline: Baseline) -> float:
    """Half-width of the check-subset timing acceptance, wide enough for any honest peak."""
    return float(max(enc_slot_width, 8.0 * baseline.sigma))


def security_analysis(batch: KeyBatch, params: SecurityParams, baseline: Baseline,
                      n: int | None = None) -> SecurityReport:
    """Secure bits per coincidence and secure key rate of a key batch.

    ``n`` overrides the coincidence count used in the finite-size term
    (defaults to the number of key and check pairs in the batch).
    """
    if batch.pairs < MIN_PAIRS:
        raise ValueError(f"security analysis needs >= {MIN_PAIRS} pairs, batch has {batch.pairs}")
    flags: list[str] = []
    i_ab = batch_mutual_information(batch)
    check = batch.check
    if check is None or check.n_timing <= 0 or not math.isfinite(check.second_moment):
        flags.append("no-check-data")
        excess = math.inf
        chi = float(batch.D)
    else:
        excess = check.second_moment / baseline.variance - 1.0
        if excess < 0:
            flags.append("variance-below-baseline")
            excess = 0.0
        chi = float(params.excess_noise_model(excess, batch))
    coincidences = batch.pairs + (check.pairs if check is not None else 0)
    n_eff = coincidences if n is None else int(n)
    delta_fk = finite_size_penalty(n_eff, params.epsilon) if params.finite_size else 0.0
    delta_i = max(0.0, params.beta * i_ab - chi - delta_fk)
    rate = coincidences / batch.duration
    return SecurityReport(
        i_ab=i_ab, chi_ae=chi, delta_fk=delta_fk, delta_i=delta_i,
        skr=delta_i * rate * params.key_fraction, n=n_eff, coincidence_rate=rate,
        excess_noise=excess, flags=tuple(flags),
    )


def asymptotic_delta_i(report: SecurityReport, beta: float) -> float:
    return max(0.0, beta * report.i_ab - report.chi_ae)


def empty_report(flag: str) -> SecurityReport:
    return SecurityReport(np.nan, np.nan, np.nan, 0.0, 0.0, 0, 0.0, np.nan, (flag,))
