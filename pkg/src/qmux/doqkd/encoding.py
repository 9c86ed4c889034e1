"""Frame / slot / bin temporal encoding and bin-sifting."""
from __future__ import annotations

import functools
from dataclasses import dataclass, field

import numpy as np

from ..timebase import TagStream


@dataclass(frozen=True)
class EncodingParams:
    """A frame holds 2**D slots, a slot holds I bins, a bin is ``bin_width`` ps wide."""

    D: int = 6
    I: int = 3
    bin_width: int = 110
    frame_origin: int = 0

    def __post_init__(self):
        for name in ("D", "I", "bin_width"):
            v = getattr(self, name)
            if int(v) != v or v <= 0:
                raise ValueError(f"{name} must be a positive integer, got {v}")
        if self.D > 16:
            raise ValueError("D > 16 is not supported (slot symbols are stored as uint16)")

    @property
    def slots_per_frame(self) -> int:
        return 1 << self.D

    @property
    def slot_width(self) -> int:
        return self.I * self.bin_width

    @property
    def frame_length(self) -> int:
        return self.slots_per_frame * self.I * self.bin_width

    def key(self) -> tuple[int, int, int]:
        return (self.D, self.I, self.bin_width)


@dataclass(frozen=True)
class SiftedEvent:
    frame_no: int
    slot_no: int
    bin_no: int


@dataclass(frozen=True, eq=False)
class SiftedEvents:
    """Frame index and in-frame offset (ps) of each tag; slot and bin follow from the geometry."""

    frame: np.ndarray
    offset: np.ndarray
    bin_width: int
    I: int

    def __len__(self) -> int:
        return int(self.frame.size)

    @functools.cached_property
    def slot(self) -> np.ndarray:
        return self.offset // np.int64(self.I * self.bin_width)

    @functools.cached_property
    def bin(self) -> np.ndarray:
        return (self.offset // np.int64(self.bin_width)) % np.int64(self.I)

    def select(self, mask) -> "SiftedEvents":
        return SiftedEvents(self.frame[mask], self.offset[mask], self.bin_width, self.I)

    def records(self) -> list[SiftedEvent]:
        return [SiftedEvent(int(f), int(s), int(b)) for f, s, b in zip(self.frame, self.slot, self.bin)]

    @classmethod
    def from_records(cls, recs, I: int, bin_width: int = 1) -> "SiftedEvents":
        """Events placed at the start of their (slot, bin); for tests and hand-built inputs."""
        recs = list(recs)
        f = np.array([r.frame_no for r in recs], dtype=np.int64)
        off = np.array([(r.slot_no * I + r.bin_no) * bin_width for r in recs], dtype=np.int64)
        return cls(f, off, bin_width, I)


def assign_bins(tags, enc: EncodingParams) -> SiftedEvents:
    """Frame, slot and bin of every tag by half-open interval arithmetic from ``frame_origin``.

    A tag exactly on an edge belongs to the interval that starts there.
    """
    t = tags.t if isinstance(tags, TagStream) else np.asarray(tags, dtype=np.int64)
    rel = t - np.int64(enc.frame_origin)
    if rel.size and rel.min() < 0:
        raise ValueError("tag before frame_origin")
    frame, within = np.divmod(rel, np.int64(enc.frame_length))
    return SiftedEvents(frame, within, enc.bin_width, enc.I)


def common_frames(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Index pairs (ia, ib) with a[ia] == b[ib]; both inputs sorted and free of duplicates."""
    if a.size == 0 or b.size == 0:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty
    if a.size > b.size:
        ib, ia = common_frames(b, a)
        return ia, ib
    ib = np.searchsorted(b, a)
    np.minimum(ib, b.size - 1, out=ib)
    hit = b[ib] == a
    return np.flatnonzero(hit), ib[hit]


def single_event_frames(ev: SiftedEvents) -> np.ndarray:
    """Mask of events that are alone in their frame (input must be frame-sorted)."""
    f = ev.frame
    if f.size == 0:
        return np.zeros(0, dtype=bool)
    if f.size > 1 and np.any(f[1:] < f[:-1]):
        raise ValueError("events must be sorted by frame")
    alone = np.ones(f.size, dtype=bool)
    same = f[1:] == f[:-1]
    alone[1:] &= ~same
    alone[:-1] &= ~same
    return alone


def match_announced(own: SiftedEvents, peer_frames: np.ndarray, peer_bins: np.ndarray) -> np.ndarray:
    """Indices into ``own`` (already single-event) that share frame and bin with the peer's announcement."""
    i_own, i_peer = common_frames(own.frame, np.asarray(peer_frames))
    keep = own.bin[i_own] == np.asarray(peer_bins)[i_peer]
    return i_own[keep]


def _splitmix64(x: np.ndarray) -> np.ndarray:
    z = x.astype(np.uint64) + np.uint64(0x9E3779B97F4A7C15)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def key_frame_mask(frames: np.ndarray, key_fraction: float, seed: int) -> np.ndarray:
    """Deterministic per-frame split: True for frames used for key, False for security checks."""
    mixed = _splitmix64(np.asarray(frames, dtype=np.int64).astype(np.uint64) ^ _splitmix64(np.array([seed]))[0])
    u = (mixed >> np.uint64(11)).astype(np.float64) / float(1 << 53)
    return u < key_fraction


@dataclass(frozen=True, eq=False)
class CheckStatistics:
    """Disclosed security-check subset: bin-sifted pair count, QBER, timing second moment."""

    pairs: int
    errors: int
    second_moment: float  # ps^2, about zero difference, accidentals subtracted
    n_timing: int

    @property
    def qber(self) -> float:
        return self.errors / self.pairs if self.pairs else float("nan")


@dataclass(frozen=True, eq=False)
class KeyBatch:
    """Aligned raw-key symbols of one batch and its disclosed check statistics."""

    symbols_a: np.ndarray
    symbols_b: np.ndarray
    frames: np.ndarray
    D: int
    duration: float
    check: CheckStatistics | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.symbols_a.shape != self.symbols_b.shape:
            raise ValueError("symbol sequences must be aligned")

    @property
    def pairs(self) -> int:
        return int(self.symbols_a.size)

    @property
    def qber(self) -> float:
        return float(np.mean(self.symbols_a != self.symbols_b)) if self.pairs else float("nan")

    @property
    def rkr(self) -> float:
        return self.D * self.pairs / self.duration

    def equals(self, other: "KeyBatch") -> bool:
        return (self.D == other.D and self.duration == other.duration
                and np.array_equal(self.symbols_a, other.symbols_a)
                and np.array_equal(self.symbols_b, other.symbols_b)
                and np.array_equal(self.frames, other.frames))

    @staticmethod
    def concat(batches: list["KeyBatch"]) -> "KeyBatch":
        if not batches:
            raise ValueError("no batches to pool")
        D = batches[0].D
        if any(b.D != D for b in batches):
            raise ValueError("cannot pool batches with different D")
        checks = [b.check for b in batches if b.check is not None]
        check = None
        if checks:
            n_t = sum(c.n_timing for c in checks)
            m2 = sum(c.second_moment * c.n_timing for c in checks) / n_t if n_t else float("nan")
            check = CheckStatistics(sum(c.pairs for c in checks), sum(c.errors for c in checks), m2, n_t)
        return KeyBatch(
            symbols_a=np.concatenate([b.symbols_a for b in batches]),
            symbols_b=np.concatenate([b.symbols_b for b in batches]),
            frames=np.concatenate([b.frames for b in batches]),
            D=D,
            duration=float(sum(b.duration for b in batches)),
            check=check,
        )


def sift(alice: SiftedEvents, bob: SiftedEvents, duration: float = 1.0, D: int = 6) -> KeyBatch:
    """Bin-sifting: keep frames with exactly one event per side whose bins agree; symbols are slots.

    Only (frame, bin) of single-event frames is exchanged; the slot never leaves a node.
    """
    a1 = alice.select(single_event_frames(alice))
    b1 = bob.select(single_event_frames(bob))
    ia = match_announced(a1, b1.frame, b1.bin)
    ib = match_announced(b1, a1.frame, a1.bin)
    return KeyBatch(
        symbols_a=a1.slot[ia].astype(np.uint16),
        symbols_b=b1.slot[ib].astype(np.uint16),
        frames=a1.frame[ia],
        D=D,
        duration=duration,
    )


def check_statistics(alice: SiftedEvents, bob_frames: np.ndarray, bob_slots: np.ndarray,
                     bob_bins: np.ndarray, bob_offsets: np.ndarray, timing_window: float) -> CheckStatistics:
    """Statistics of the disclosed check frames (both inputs single-event, frame-sorted).

    QBER uses the same bin-sifting as the key. The timing second moment uses
    every frame-matched pair, measured about zero difference (so a residual
    misalignment counts as noise), restricted to |d| < timing_window, with the
    flat accidental floor estimated from the band timing_window <= |d| < 3 timing_window
    and subtracted.
    """
    ia, ib = common_frames(alice.frame, np.asarray(bob_frames))
    same_bin = alice.bin[ia] == np.asarray(bob_bins)[ib]
    pairs = int(np.count_nonzero(same_bin))
    errors = int(np.count_nonzero(same_bin & (alice.slot[ia] != np.asarray(bob_slots)[ib])))
    d = (np.asarray(bob_offsets)[ib] - alice.offset[ia]).astype(np.float64)
    w = float(timing_window)
    ad = np.abs(d)
    inner = ad < w
    n_in = int(np.count_nonzero(inner))
    n_side = int(np.count_nonzero((ad >= w) & (ad < 3.0 * w)))
    n_acc = n_side / 2.0
    n_true = n_in - n_acc
    if n_true <= 0:
        m2 = float("nan")
    else:
        m2 = (float(np.sum(d[inner] ** 2)) - n_acc * w * w / 3.0) / n_true
    return CheckStatistics(pairs=pairs, errors=errors, second_moment=m2, n_timing=max(int(round(n_true)), 0))
