"""Quick oracle suite run by ``qmux selftest``: each core routine against its slow reference."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import oracles
from .coincidence import cross_correlate
from .doqkd.encoding import EncodingParams, SiftedEvent, SiftedEvents, assign_bins, sift
from .doqkd.metrics import joint_histogram, mutual_information
from .netharness import messages, wire
from .qtwtt import measurement_from_centers


@dataclass(frozen=True)
class SuiteResult:
    name: str
    ok: bool
    detail: str
    seconds: float


def _twtt_algebra(rng) -> str | None:
    for _ in range(2000):
        t1, t2 = rng.uniform(-1e9, 1e9, size=2)
        m = measurement_from_centers(t1, t2)
        if m.t0_est != (t1 - t2) / 2 or m.link_delay_est != (t1 + t2) / 2:
            return f"t1={t1!r} t2={t2!r}"
    return None


def _correlation(rng) -> str | None:
    for i in range(60):
        a = np.sort(rng.integers(0, 5000, size=rng.integers(0, 60)))
        b = np.sort(rng.integers(0, 5000, size=rng.integers(0, 60)))
        center, half, bw = float(rng.integers(-800, 800)), float(rng.integers(1, 600)), int(rng.integers(1, 40))
        h = cross_correlate(a, b, center, half, bw)
        ref = oracles.brute_correlation(a, b, h.origin, bw, h.n_bins)
        if not np.array_equal(h.counts, ref):
            return f"instance {i}"
    return None


def _events(rng, n_frames: int, max_events: int, enc: EncodingParams) -> list[SiftedEvent]:
    out = []
    for f in range(n_frames):
        for _ in range(int(rng.integers(0, max_events + 1))):
            out.append(SiftedEvent(f, int(rng.integers(0, enc.slots_per_frame)), int(rng.integers(0, enc.I))))
    return out


def _sifting(rng, sift_fn) -> str | None:
    enc = EncodingParams(D=2, I=2, bin_width=1)
    for i in range(400):
        ra = _events(rng, 5, 3, enc)
        rb = _events(rng, 5, 3, enc)
        batch = sift_fn(SiftedEvents.from_records(ra, enc.I), SiftedEvents.from_records(rb, enc.I), 1.0, enc.D)
        got = list(zip(batch.frames.tolist(), batch.symbols_a.tolist(), batch.symbols_b.tolist()))
        ref = oracles.brute_sift([(e.frame_no, e.slot_no, e.bin_no) for e in ra],
                                 [(e.frame_no, e.slot_no, e.bin_no) for e in rb])
        if got != ref:
            return f"instance {i}: got {got} expected {ref}"
    return None


def _qber(rng) -> str | None:
    enc = EncodingParams(D=4, I=3, bin_width=40)
    sigma = 40.0
    n = 200_000
    # one pair in every other frame, Alice uniform in it: no multi-event frames or accidentals
    ta = 2 * np.arange(n, dtype=np.int64) * enc.frame_length + rng.integers(0, enc.frame_length, size=n)
    tb = ta + np.rint(rng.normal(0.0, sigma, size=n)).astype(np.int64)
    a, b = assign_bins(ta, enc), assign_bins(tb, enc)
    batch = sift(a, b, 1.0, enc.D)
    p = oracles.expected_qber(sigma, enc.D, enc.I, enc.bin_width)
    se = math.sqrt(p * (1 - p) / batch.pairs)
    if abs(batch.qber - p) > 3 * se:
        return f"simulated {batch.qber:.5f} vs oracle {p:.5f} (3 sigma {3 * se:.5f})"
    return None


def _mutual_information(rng) -> str | None:
    s = np.repeat(np.arange(64, dtype=np.uint16), 100)
    if mutual_information(joint_histogram(s, s, 6)) != 6.0:
        return "perfect correlation did not give exactly 6 bits"
    for p in (0.01, 0.1, 0.3):
        got = mutual_information(oracles.adjacent_confusion_joint(8, p, 80_000))
        ref = oracles.adjacent_confusion_mi(8, p)
        if abs(got - ref) > 1e-9:
            return f"adjacent confusion p={p}: {got} vs {ref}"
    return None


def _wire(rng) -> str | None:
    samples = [
        messages.TagDigest(3, "alice", "D1", rng.integers(0, 2**40, size=50), origin=7),
        messages.TwttReport(3, "bob", "forward", True, 588e6 + 1.25, 0.5, 83.6),
        messages.SiftAnnounce(3, "bob", np.arange(10, dtype=np.int64), np.arange(10, dtype=np.int64) % 3),
        messages.BatchConfirm(3, "alice", 10, 0.01, 4, 0, 123.5, 4),
    ]
    for msg in samples:
        if not messages.messages_equal(wire.decode(wire.encode(msg)), msg):
            return f"{msg.kind} did not round-trip"
    return None


def faulty_sift(alice: SiftedEvents, bob: SiftedEvents, duration: float = 1.0, D: int = 6):
    """Sifting with the bin comparison removed; used to check that the suite catches it."""
    return sift(SiftedEvents(alice.frame, alice.slot * alice.I * alice.bin_width, alice.bin_width, alice.I),
                SiftedEvents(bob.frame, bob.slot * bob.I * bob.bin_width, bob.bin_width, bob.I), duration, D)


def run_suites(inject_fault: str | None = None, seed: int = 2024) -> list[SuiteResult]:
    sift_fn = faulty_sift if inject_fault == "sift" else sift
    suites: list[tuple[str, Callable]] = [
        ("twtt-algebra", _twtt_algebra),
        ("correlation", _correlation),
        ("sifting", lambda rng: _sifting(rng, sift_fn)),
        ("qber-integral", _qber),
        ("mutual-information", _mutual_information),
        ("wire-roundtrip", _wire),
    ]
    results = []
    for name, fn in suites:
        rng = np.random.default_rng([seed, len(results)])
        t = time.perf_counter()
        try:
            problem = fn(rng)
        except Exception as e:  # noqa: BLE001 - a crash is a failed suite
            problem = f"{type(e).__name__}: {e}"
        results.append(SuiteResult(name, problem is None, problem or "ok", time.perf_counter() - t))
    return results
