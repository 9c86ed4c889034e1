"""Picosecond time representation, clock models, seeded random sources and TDEV.

All timestamps in the simulator are signed 64-bit integer picoseconds counted
from the scenario origin. Sub-picosecond quantities (fit centers, deviations)
are plain floats.
"""
from __future__ import annotations

import functools
import zlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np

PS_PER_S = 10**12
INSTANT_MIN = -(2**63)
INSTANT_MAX = 2**63 - 1
FWHM_PER_SIGMA = 2.0 * np.sqrt(2.0 * np.log(2.0))  # 2.3548...

# knot spacing of the seeded random-walk paths used by clocks and links
WALK_KNOT_S = 1.0


def check_instants(t) -> np.ndarray:
    """Return ``t`` as an int64 array, raising OverflowError if any value is out of range."""
    arr = np.asarray(t)
    if arr.dtype.kind == "f":
        if arr.size and (not np.all(np.isfinite(arr)) or arr.max() > INSTANT_MAX or arr.min() < INSTANT_MIN):
            raise OverflowError("instant outside the representable int64 picosecond range")
        return np.rint(arr).astype(np.int64)
    if arr.dtype.kind in "iu":
        if arr.dtype == np.uint64 and arr.size and arr.max() > INSTANT_MAX:
            raise OverflowError("instant outside the representable int64 picosecond range")
        return arr.astype(np.int64, copy=False)
    if arr.dtype == object:
        vals = [int(v) for v in arr.ravel()]
        if any(v > INSTANT_MAX or v < INSTANT_MIN for v in vals):
            raise OverflowError("instant outside the representable int64 picosecond range")
        return np.array(vals, dtype=np.int64).reshape(arr.shape)
    raise TypeError(f"cannot interpret {arr.dtype} as picosecond instants")


def shift_instants(t: np.ndarray, delta) -> np.ndarray:
    """Add real-valued picosecond offsets to int64 instants with 1 ps rounding.

    The rounding is applied to the offset only, so adding an integer offset is exact.
    Raises OverflowError instead of wrapping.
    """
    t = check_instants(t)
    d = np.rint(np.asarray(delta, dtype=np.float64))
    if t.size == 0:
        return t.copy()
    d_arr = np.broadcast_to(d, t.shape)
    if not np.all(np.isfinite(d_arr)) or np.abs(d_arr).max() >= 2.0**63:
        raise OverflowError("offset outside the representable int64 picosecond range")
    d_int = d_arr.astype(np.int64)
    # exact bound check in Python integers; float sums lose the low bits near 2**63
    if int(t.max()) + int(d_int.max()) > INSTANT_MAX or int(t.min()) + int(d_int.min()) < INSTANT_MIN:
        raise OverflowError("instant arithmetic overflowed the int64 picosecond range")
    return t + d_int


def seconds(t_ps) -> np.ndarray | float:
    return np.asarray(t_ps, dtype=np.float64) / PS_PER_S


def _label_key(label) -> int:
    if isinstance(label, (int, np.integer)):
        return int(label) & 0xFFFFFFFF
    return zlib.crc32(str(label).encode("utf-8"))


def derive_rng(seed: int, *labels) -> np.random.Generator:
    """Independent generator for a named task, fully determined by ``seed`` and ``labels``.

    Labels may be strings (hashed with CRC32) or integers (epoch numbers etc).
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_label_key(x) for x in labels))
    return np.random.Generator(np.random.PCG64(ss))


@functools.lru_cache(maxsize=64)
def _walk_knots(seed: int, n_blocks: int, block: int = 4096) -> np.ndarray:
    """Unit-variance-per-knot Gaussian random walk starting at 0, seeded per block."""
    steps = [derive_rng(seed, "walk", b).standard_normal(block) for b in range(n_blocks)]
    path = np.concatenate([[0.0], np.cumsum(np.concatenate(steps))])
    path.setflags(write=False)
    return path


def random_walk(seed: int, sigma_per_sqrt_s: float, t_s) -> np.ndarray:
    """Evaluate a seeded random walk with diffusion ``sigma_per_sqrt_s`` at times ``t_s`` (s).

    The path is piecewise linear between knots spaced ``WALK_KNOT_S`` apart and
    is a pure function of ``seed``, so re-querying gives identical values.
    """
    t_s = np.asarray(t_s, dtype=np.float64)
    if sigma_per_sqrt_s == 0.0 or t_s.size == 0:
        return np.zeros_like(t_s)
    if np.any(t_s < 0):
        raise ValueError("random walk is defined for t >= 0 only")
    need = int(np.ceil(t_s.max() / WALK_KNOT_S)) + 2
    n_blocks = max(1, -(-need // 4096))
    # round up to a power of two so the cache is reused as scenarios grow
    n_blocks = 1 << (n_blocks - 1).bit_length()
    knots = _walk_knots(int(seed), n_blocks)
    x = t_s / WALK_KNOT_S
    return sigma_per_sqrt_s * np.sqrt(WALK_KNOT_S) * np.interp(x, np.arange(knots.size), knots)


@dataclass(frozen=True)
class ClockModel:
    """Maps true scenario time to a node's local timescale.

    offset and white_phase_sigma are in ps, drift_rate in ps per second of true
    time. ``random_walk`` (ps per sqrt(s)) adds an optional seeded wander that
    is shared by every read of the clock.
    """

    offset: float = 0.0
    drift_rate: float = 0.0
    white_phase_sigma: float = 0.0
    seed: int = 0
    random_walk: float = 0.0

    def __post_init__(self):
        if not self.white_phase_sigma >= 0:
            raise ValueError(f"white_phase_sigma must be >= 0, got {self.white_phase_sigma}")
        if not self.random_walk >= 0:
            raise ValueError(f"random_walk must be >= 0, got {self.random_walk}")

    @property
    def is_identity(self) -> bool:
        return self.offset == 0 and self.drift_rate == 0 and self.white_phase_sigma == 0 and self.random_walk == 0

    def deterministic_error(self, t_true) -> np.ndarray:
        """Offset + drift + wander at ``t_true`` (ps), without the per-read white noise."""
        t_s = seconds(t_true)
        err = self.offset + self.drift_rate * t_s
        if self.random_walk:
            err = err + random_walk(self.seed, self.random_walk, t_s)
        return np.asarray(err, dtype=np.float64)


def to_local(clock: ClockModel, t_true, rng: np.random.Generator | None = None,
             steer: float = 0.0) -> np.ndarray:
    """Read ``clock`` at true instants ``t_true`` (ps); returns int64 local instants.

    local = t_true + offset + drift_rate * t_true[s] + N(0, white_phase_sigma) - steer,
    rounded to 1 ps once. ``steer`` is a phase correction applied by a servo.
    A random source is required only when the clock has white phase noise.
    """
    t = check_instants(np.atleast_1d(t_true))
    if clock.is_identity and steer == 0:
        return t.copy()
    err = clock.deterministic_error(t) - steer
    if clock.white_phase_sigma > 0:
        if rng is None:
            raise ValueError("a random source is required for a clock with white phase noise")
        err = err + rng.normal(0.0, clock.white_phase_sigma, size=t.shape)
    return shift_instants(t, err)


def tdev(samples: Sequence[float], tau0: float, averaging_time: float) -> float:
    """Time deviation at ``averaging_time`` from time-offset samples taken every ``tau0``.

    Fully overlapping estimator with m = averaging_time / tau0:
    TDEV^2 = < (sum_{i=j}^{j+m-1} x[i+2m] - 2 x[i+m] + x[i])^2 > / (6 m^2),
    averaged over every start j. White phase noise of std s gives
    TDEV(tau0) = s and a tau^-1/2 slope.
    """
    x = np.asarray(samples, dtype=np.float64)
    ratio = averaging_time / tau0
    m = int(round(ratio))
    if m < 1 or abs(ratio - m) > 1e-9 * max(1.0, ratio):
        raise ValueError(f"averaging_time {averaging_time} is not a positive multiple of tau0 {tau0}")
    if x.size < 3 * m:
        raise ValueError(f"need at least {3 * m} samples for m = {m}, have {x.size}")
    c = np.concatenate(([0.0], np.cumsum(x)))
    s = c[m:] - c[:-m]  # window sums starting at each index
    d2 = s[2 * m:] - 2.0 * s[m:-m] + s[: -2 * m]
    return float(np.sqrt(np.mean(d2 * d2) / 6.0) / m)


def default_multiples(n: int) -> list[int]:
    """Octave-spaced window sizes 1, 2, 4, ... that fit at least 3 times into n samples."""
    out = []
    m = 1
    while n >= 3 * m:
        out.append(m)
        m *= 2
    return out


def tdev_curve(samples, tau0: float, multiples: Sequence[int] | None = None) -> tuple[np.ndarray, np.ndarray]:
    """TDEV at each averaging multiple; returns (tau_s, tdev) arrays."""
    x = np.asarray(samples, dtype=np.float64)
    ms = list(multiples) if multiples is not None else default_multiples(x.size)
    taus = np.array([m * tau0 for m in ms], dtype=np.float64)
    devs = np.array([tdev(x, tau0, m * tau0) for m in ms], dtype=np.float64)
    return taus, devs


def loglog_slope(taus, devs, weights=None) -> float:
    """Least-squares slope of log10(dev) against log10(tau), optionally weighted."""
    taus = np.asarray(taus, dtype=np.float64)
    devs = np.asarray(devs, dtype=np.float64)
    ok = devs > 0
    if ok.sum() < 2:
        raise ValueError("need at least two positive deviations for a slope")
    w = None if weights is None else np.asarray(weights, dtype=np.float64)[ok]
    return float(np.polyfit(np.log10(taus[ok]), np.log10(devs[ok]), 1, w=w)[0])


def tdev_weights(n: int, multiples: Sequence[int]) -> np.ndarray:
    """Fit weights ~ 1 / relative error of each TDEV point: sqrt of (overlapping terms / m)."""
    m = np.asarray(multiples, dtype=np.float64)
    return np.sqrt(np.maximum(n - 3 * m + 1, 1.0) / m)


@dataclass(frozen=True)
class TimeTag:
    """One detected photon: local timestamp (ps), detector id and node id."""

    t: int
    detector: str
    node: str


@dataclass(frozen=True, eq=False)
class TagStream:
    """Sorted timestamps from one detector (or photons in flight before detection).

    ``pair_id`` is simulator ground truth: the emitting pair of each event, -1
    for dark counts. Protocol code never looks at it.
    """

    t: np.ndarray
    pair_id: np.ndarray
    detector: str = ""
    node: str = ""

    def __post_init__(self):
        t = check_instants(self.t)
        pid = np.asarray(self.pair_id, dtype=np.int64)
        if t.shape != pid.shape or t.ndim != 1:
            raise ValueError("t and pair_id must be 1-d arrays of equal length")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "pair_id", pid)

    @classmethod
    def from_times(cls, t, detector: str = "", node: str = "") -> "TagStream":
        t = np.sort(check_instants(np.asarray(t)))
        return cls(t, np.full(t.shape, -1, dtype=np.int64), detector, node)

    @classmethod
    def empty(cls, detector: str = "", node: str = "") -> "TagStream":
        return cls(np.zeros(0, np.int64), np.zeros(0, np.int64), detector, node)

    def __len__(self) -> int:
        return int(self.t.size)

    def is_sorted(self) -> bool:
        return bool(self.t.size < 2 or np.all(self.t[1:] >= self.t[:-1]))

    def tags(self) -> list[TimeTag]:
        return [TimeTag(int(x), self.detector, self.node) for x in self.t]

    def select(self, mask) -> "TagStream":
        return TagStream(self.t[mask], self.pair_id[mask], self.detector, self.node)

    def with_times(self, t, resort: bool = True) -> "TagStream":
        """Same events with new timestamps, stably re-sorted by time."""
        t = check_instants(t)
        if resort and t.size > 1 and not np.all(t[1:] >= t[:-1]):
            order = np.argsort(t, kind="stable")
            return TagStream(t[order], self.pair_id[order], self.detector, self.node)
        return TagStream(t, self.pair_id, self.detector, self.node)

    def relabel(self, detector: str | None = None, node: str | None = None) -> "TagStream":
        return TagStream(self.t, self.pair_id, detector if detector is not None else self.detector,
                         node if node is not None else self.node)

    def equals(self, other: "TagStream") -> bool:
        return (self.detector == other.detector and self.node == other.node
                and np.array_equal(self.t, other.t) and np.array_equal(self.pair_id, other.pair_id))
