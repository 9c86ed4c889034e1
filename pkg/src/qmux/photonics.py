"""Biphoton emission and single-photon detection.

Pairs are emitted as a homogeneous Poisson process; the signal photon trails
(or leads) its idler by a Gaussian correlation time. Detection thins by
efficiency, adds Gaussian timing jitter, injects dark counts and enforces a
non-paralyzable dead time.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Literal

import numpy as np

from . import _kernels
from .timebase import FWHM_PER_SIGMA, PS_PER_S, TagStream, shift_instants

Arm = Literal["signal", "idler"]


@dataclass(frozen=True)
class SourceParams:
    pair_rate: float  # pairs / s
    correlation_sigma: float = 0.0  # ps
    label: str = "ET-EBS1"

    def __post_init__(self):
        if not self.pair_rate > 0:
            raise ValueError(f"pair_rate must be > 0, got {self.pair_rate}")
        if not self.correlation_sigma >= 0:
            raise ValueError(f"correlation_sigma must be >= 0, got {self.correlation_sigma}")


@dataclass(frozen=True)
class DetectorParams:
    efficiency: float = 1.0
    jitter_fwhm: float = 0.0  # ps
    dark_rate: float = 100.0  # counts / s
    dead_time: float = 20_000.0  # ps

    def __post_init__(self):
        if not 0.0 <= self.efficiency <= 1.0:
            raise ValueError(f"efficiency must lie in [0, 1], got {self.efficiency}")
        if not self.jitter_fwhm >= 0:
            raise ValueError(f"jitter_fwhm must be >= 0, got {self.jitter_fwhm}")
        if not self.dark_rate >= 0:
            raise ValueError(f"dark_rate must be >= 0, got {self.dark_rate}")
        if not self.dead_time >= 0:
            raise ValueError(f"dead_time must be >= 0, got {self.dead_time}")

    @property
    def jitter_sigma(self) -> float:
        return self.jitter_fwhm / FWHM_PER_SIGMA


IDEAL_DETECTOR = DetectorParams(efficiency=1.0, jitter_fwhm=0.0, dark_rate=0.0, dead_time=0.0)


@dataclass(frozen=True)
class EmissionRecord:
    t_emit: int
    pair_id: int
    arm: Arm


@dataclass(frozen=True)
class PairEmissions:
    """Both arms of a batch of pairs, each sorted by its own emission time."""

    signal: TagStream
    idler: TagStream

    def __len__(self) -> int:
        return len(self.idler)

    def records(self) -> Iterator[EmissionRecord]:
        """Per-photon records in time order (small batches / debugging only)."""
        merged = sorted(
            [(int(t), int(p), "idler") for t, p in zip(self.idler.t, self.idler.pair_id)]
            + [(int(t), int(p), "signal") for t, p in zip(self.signal.t, self.signal.pair_id)]
        )
        for t, p, arm in merged:
            yield EmissionRecord(t, p, arm)


def generate_pairs(src: SourceParams, duration: float, rng: np.random.Generator,
                   start: int = 0, first_pair_id: int = 0) -> PairEmissions:
    """Emit pairs over ``[start, start + duration)``; ``duration`` in seconds, ``start`` in ps.

    The idler carries the emission instant; the signal is offset by
    N(0, correlation_sigma), quantized to 1 ps.
    """
    if not duration > 0:
        raise ValueError(f"duration must be > 0, got {duration}")
    span = int(round(duration * PS_PER_S))
    n = int(rng.poisson(src.pair_rate * duration))
    t = np.sort(rng.integers(0, span, size=n, dtype=np.int64)) + np.int64(start)
    ids = np.arange(first_pair_id, first_pair_id + n, dtype=np.int64)
    idler = TagStream(t, ids, detector="", node="")
    if src.correlation_sigma > 0:
        ts = shift_instants(t, rng.normal(0.0, src.correlation_sigma, size=n))
        signal = TagStream(t, ids).with_times(ts)
    else:
        signal = TagStream(t.copy(), ids.copy())
    return PairEmissions(signal=signal, idler=idler)


def route(stream: TagStream, p_first: float, rng: np.random.Generator) -> tuple[TagStream, TagStream]:
    """Passive beam splitter: each photon goes to the first output with probability ``p_first``."""
    if not 0.0 <= p_first <= 1.0:
        raise ValueError(f"splitting ratio must lie in [0, 1], got {p_first}")
    first = rng.random(len(stream)) < p_first
    return stream.select(first), stream.select(~first)


def thin(stream: TagStream, keep_probability: float, rng: np.random.Generator) -> TagStream:
    if keep_probability >= 1.0:
        rng.random(len(stream))  # keep the draw count independent of the value
        return stream
    return stream.select(rng.random(len(stream)) < keep_probability)


def detect(photons: TagStream, det: DetectorParams, rng: np.random.Generator,
           window: tuple[int, int] | None = None, detector: str = "", node: str = "",
           clip: bool = True) -> TagStream:
    """Turn photons arriving at true instants into detector clicks (still true time).

    ``window`` = [start, stop) ps bounds the recording; dark counts are spread over
    it and, if ``clip``, clicks jittered outside it are dropped. Without a window
    the span of the input is used and nothing is clipped.
    """
    if not photons.is_sorted():
        raise ValueError("photon stream must be sorted by arrival time")
    n = len(photons)
    kept = rng.random(n) < det.efficiency
    n_kept = int(np.count_nonzero(kept))
    # the kept mask never depends on arrival times, so drawing jitter per kept photon keeps alignment
    jitter = rng.normal(0.0, det.jitter_sigma, size=n_kept) if det.jitter_fwhm > 0 else None
    if window is None:
        lo, hi = (int(photons.t[0]), int(photons.t[-1]) + 1) if n else (0, 0)
        clip = False
    else:
        lo, hi = int(window[0]), int(window[1])
    n_dark = int(rng.poisson(det.dark_rate * max(hi - lo, 0) / PS_PER_S)) if det.dark_rate > 0 else 0
    dark_t = rng.integers(lo, hi, size=n_dark, dtype=np.int64) if n_dark else np.zeros(0, np.int64)

    t = photons.t[kept]
    if jitter is not None:
        t = shift_instants(t, jitter)
    t = np.concatenate([t, dark_t])
    pid = np.concatenate([photons.pair_id[kept], np.full(n_dark, -1, dtype=np.int64)])
    order = np.argsort(t, kind="stable")
    t, pid = t[order], pid[order]
    if clip:
        inside = (t >= lo) & (t < hi)
        t, pid = t[inside], pid[inside]
    if det.dead_time > 0 and t.size > 1:
        keep = _kernels.dead_time_mask(t, np.int64(int(np.ceil(det.dead_time))))
        t, pid = t[keep], pid[keep]
    return TagStream(t, pid, detector=detector, node=node)


def coincidence_fwhm(*jitter_fwhms: float) -> float:
    """FWHM of the arrival-time difference for independent Gaussian contributions."""
    return float(np.sqrt(np.sum(np.square(jitter_fwhms))))

