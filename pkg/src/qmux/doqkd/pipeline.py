"""Node-local DO-QKD steps shared by the two-node harness and the centralized evaluator."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .encoding import (CheckStatistics, EncodingParams, KeyBatch, SiftedEvents, assign_bins,
                       check_statistics, key_frame_mask, match_announced, single_event_frames)
from .security import Baseline, SecurityParams, SecurityReport, security_analysis, timing_window, MIN_PAIRS


@dataclass(frozen=True, eq=False)
class LocalEvents:
    """One node's single-event frames, split into key and check subsets."""

    key: SiftedEvents
    check: SiftedEvents


def prepare_local(t: np.ndarray, enc: EncodingParams, key_fraction: float, split_seed: int) -> LocalEvents:
    t = np.asarray(t, dtype=np.int64)
    t = t[t >= enc.frame_origin]
    ev = assign_bins(t, enc)
    ev = ev.select(single_event_frames(ev))
    is_key = key_frame_mask(ev.frame, key_fraction, split_seed)
    return LocalEvents(key=ev.select(is_key), check=ev.select(~is_key))


def key_symbols(own: SiftedEvents, peer_frames: np.ndarray, peer_bins: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    idx = match_announced(own, peer_frames, peer_bins)
    return own.slot[idx].astype(np.uint16), own.frame[idx]


@dataclass(frozen=True, eq=False)
class QkdSample:
    """Time-basis tags of both nodes: Alice on her timescale, Bob on his corrected one.

    ``bob_shift`` is Bob's frame-origin offset relative to Alice's (link delay
    plus residual clock offset as estimated by time transfer).
    """

    alice: np.ndarray
    bob: np.ndarray
    bob_shift: int
    duration: float
    alice_origin: int = 0


def run_pipeline(sample: QkdSample, enc: EncodingParams, params: SecurityParams, baseline: Baseline,
                 split_seed: int) -> KeyBatch:
    """Both nodes' sifting and check-subset disclosure executed in one place."""
    enc_a = replace(enc, frame_origin=sample.alice_origin)
    enc_b = replace(enc, frame_origin=sample.alice_origin + sample.bob_shift)
    a = prepare_local(sample.alice, enc_a, params.key_fraction, split_seed)
    b = prepare_local(sample.bob, enc_b, params.key_fraction, split_seed)
    sym_a, frames = key_symbols(a.key, b.key.frame, b.key.bin)
    sym_b, _ = key_symbols(b.key, a.key.frame, a.key.bin)
    check = check_statistics(a.check, b.check.frame, b.check.slot, b.check.bin, b.check.offset,
                             timing_window(enc.slot_width, baseline))
    return KeyBatch(sym_a, sym_b, frames, enc.D, sample.duration, check=check)


def analyse(batch: KeyBatch, params: SecurityParams, baseline: Baseline) -> SecurityReport | None:
    if batch.pairs < MIN_PAIRS:
        return None
    return security_analysis(batch, params, baseline)


def check_qber(check: CheckStatistics | None) -> float:
    return check.qber if check is not None else float("nan")
