"""Scenario configuration: everything a run depends on, including the master seed."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field

from ..channel import AttackParams, LinkState
from ..doqkd.encoding import EncodingParams
from ..doqkd.security import SecurityParams
from ..photonics import DetectorParams, SourceParams
from ..timebase import ClockModel

DETECTOR_NAMES = ("d1", "d2", "d3", "d4", "d5", "d6")


@dataclass(frozen=True)
class DetectorBank:
    """D1 Alice freq-basis / TWTT, D2 Bob TWTT, D3 Bob (second source), D4 Alice (second source),
    D5 Alice time basis, D6 Bob time basis."""

    d1: DetectorParams = field(default_factory=DetectorParams)
    d2: DetectorParams = field(default_factory=DetectorParams)
    d3: DetectorParams = field(default_factory=DetectorParams)
    d4: DetectorParams = field(default_factory=DetectorParams)
    d5: DetectorParams = field(default_factory=DetectorParams)
    d6: DetectorParams = field(default_factory=DetectorParams)

    def __getitem__(self, name: str) -> DetectorParams:
        if name.lower() not in DETECTOR_NAMES:
            raise KeyError(name)
        return getattr(self, name.lower())


@dataclass(frozen=True)
class Routing:
    """Fraction of each forward-source photon sent to the time-basis detector (D5 / D6).

    ``independent``: each side's splitter acts on its own photon. ``matched``:
    both photons of a pair take the same basis (an idealized splitter used by
    the noiseless preset so that no photon is left without its partner).
    """

    alice_time_fraction: float = 0.5
    bob_time_fraction: float = 0.5
    mode: str = "independent"

    def __post_init__(self):
        if self.mode not in ("independent", "matched"):
            raise ValueError(f"routing.mode must be 'independent' or 'matched', got {self.mode!r}")
        for name in ("alice_time_fraction", "bob_time_fraction"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"routing.{name} must lie in [0, 1], got {v}")


@dataclass(frozen=True)
class TwttSettings:
    bin_width: int = 1
    half_window: float = 4096.0
    servo: bool = True
    servo_gain: float = 1.0
    initial_link_estimate: float | None = None  # ps; defaults to the link's base delay

    def __post_init__(self):
        if self.bin_width < 1:
            raise ValueError("twtt.bin_width must be >= 1")
        if not self.half_window > 0:
            raise ValueError("twtt.half_window must be > 0")
        if not 0.0 < self.servo_gain <= 1.0:
            raise ValueError("twtt.servo_gain must lie in (0, 1]")


@dataclass(frozen=True)
class EncodingGrid:
    D: tuple[int, ...] = (6,)
    I: tuple[int, ...] = (3,)
    bin_width: tuple[int, ...] = tuple(range(50, 151, 10))
    qber_cap: float = 0.05
    sample_duration: float = 5.0  # s of calibration data

    def __post_init__(self):
        if not (self.D and self.I and self.bin_width):
            raise ValueError("optimization grid must be non-empty")
        if not 0.0 < self.qber_cap <= 1.0:
            raise ValueError("optimization.qber_cap must lie in (0, 1]")


@dataclass(frozen=True)
class QkdSettings:
    enabled: bool = True
    qts: bool = True
    # Bob's frame-origin shift used when qts is off (ps); None = calibrate from nominal values
    static_shift: float | None = None
    encoding: EncodingParams | None = field(default_factory=EncodingParams)
    grid: EncodingGrid | None = None
    baseline_fwhm: float = 76.0  # ps, back-to-back coincidence width

    def __post_init__(self):
        if self.enabled and self.encoding is None and self.grid is None:
            raise ValueError("qkd needs either fixed encoding parameters or an optimization grid")
        if not self.baseline_fwhm > 0:
            raise ValueError("qkd.baseline_fwhm must be > 0")


@dataclass(frozen=True)
class CountModulation:
    """Slow multiplicative modulation of the forward transmission (e.g. polarization drift)."""

    depth: float = 0.0
    period: float = 600.0  # s

    def __post_init__(self):
        if not 0.0 <= self.depth <= 1.0:
            raise ValueError("modulation.depth must lie in [0, 1]")
        if not self.period > 0:
            raise ValueError("modulation.period must be > 0")

    def factor(self, t_s: float) -> float:
        return 1.0 - self.depth * 0.5 * (1.0 - math.cos(2.0 * math.pi * t_s / self.period))


@dataclass(frozen=True)
class ScenarioConfig:
    name: str = "scenario"
    seed: int = 0
    epoch_period: float = 5.0  # s
    duration: float = 10.0  # s
    ebs1: SourceParams = field(default_factory=lambda: SourceParams(1e6, label="ET-EBS1"))
    ebs2: SourceParams = field(default_factory=lambda: SourceParams(1e6, label="ET-EBS2"))
    detectors: DetectorBank = field(default_factory=DetectorBank)
    link: LinkState = field(default_factory=LinkState)
    attack: AttackParams | None = None
    attack_start_epoch: int = 0
    alice_clock: ClockModel = field(default_factory=ClockModel)
    bob_clock: ClockModel = field(default_factory=ClockModel)
    routing: Routing = field(default_factory=Routing)
    twtt: TwttSettings = field(default_factory=TwttSettings)
    qkd: QkdSettings = field(default_factory=QkdSettings)
    security: SecurityParams = field(default_factory=SecurityParams)
    modulation: CountModulation = field(default_factory=CountModulation)

    def __post_init__(self):
        if not self.epoch_period > 0:
            raise ValueError("epoch_period must be > 0")
        if self.n_epochs < 2:
            raise ValueError("duration must cover at least 2 epochs")
        if self.attack_start_epoch < 0:
            raise ValueError("attack_start_epoch must be >= 0")

    @property
    def n_epochs(self) -> int:
        return int(math.floor(self.duration / self.epoch_period + 1e-9))

    def canonical(self) -> dict:
        return _canonical(self)

    def digest(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _canonical(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        d = {"__type__": type(obj).__name__}
        for f in dataclasses.fields(obj):
            d[f.name] = _canonical(getattr(obj, f.name))
        return d
    if isinstance(obj, (list, tuple)):
        return [_canonical(x) for x in obj]
    if isinstance(obj, float):
        return repr(obj)
    return obj
