"""Per-node protocol logic for one epoch.

Each node owns its detectors' tags, its search windows and (for Bob) the
servo. Correlation is computed where the second stream lives: Bob builds the
forward histogram from Alice's D1 digest and his D2 tags; Alice builds the
backward one from Bob's D3 digest and her D4 tags.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from ..coincidence import NoPeakError, PeakFit, cross_correlate, fit_gaussian_peak
from ..doqkd.encoding import CheckStatistics, EncodingParams, assign_bins, check_statistics
from ..doqkd.pipeline import key_symbols, prepare_local
from ..doqkd.security import Baseline, timing_window
from ..qtwtt import ServoState, TwttMeasurement, extract_offsets, servo_update
from ..timebase import TagStream
from .messages import BatchConfirm, SiftAnnounce, TagDigest, TwttReport
from .transport import Endpoint, TransportError


@dataclass(frozen=True)
class NodeSettings:
    half_window: float
    bin_width: int
    servo_enabled: bool
    timeout: float
    key_fraction: float
    split_seed: int
    baseline: Baseline


@dataclass
class TwttTracker:
    """Search-window centers for the next epoch, tracked identically on both nodes."""

    forward_center: float
    backward_center: float

    def advance(self, m: TwttMeasurement, servo_step: float) -> None:
        # a servo step s moves Bob's clock by -s: t1 drops by s, t2 rises by s
        self.forward_center = m.t1 - servo_step
        self.backward_center = m.t2 + servo_step


@dataclass
class NodeEpochResult:
    ok: bool = True
    failure: str = ""
    measurement: TwttMeasurement | None = None
    forward_fit: PeakFit | None = None
    backward_fit: PeakFit | None = None
    symbols: np.ndarray | None = None
    frames: np.ndarray | None = None
    check: CheckStatistics | None = None
    bob_shift: int | None = None
    corrected_key_times: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    def fail(self, reason: str) -> "NodeEpochResult":
        self.ok = False
        self.failure = self.failure or reason
        return self


def _fit_or_none(a: np.ndarray, b: np.ndarray, center: float, s: NodeSettings) -> PeakFit | None:
    try:
        h = cross_correlate(a, b, center, s.half_window, s.bin_width)
        return fit_gaussian_peak(h)
    except NoPeakError:
        return None


def _report(epoch: int, sender: str, direction: str, fit: PeakFit | None) -> TwttReport:
    if fit is None:
        return TwttReport(epoch, sender, direction, False, math.nan, math.nan, math.nan)
    return TwttReport(epoch, sender, direction, True, fit.center, fit.center_uncertainty, fit.fwhm)


def _fit_from_report(r: TwttReport) -> PeakFit | None:
    if not r.ok:
        return None
    return PeakFit(center=r.center, fwhm=r.fwhm, amplitude=math.nan, background=math.nan,
                   center_uncertainty=r.center_uncertainty)


class Node:
    def __init__(self, role: str, settings: NodeSettings, tracker: TwttTracker, servo: ServoState):
        if role not in ("alice", "bob"):
            raise ValueError(role)
        self.role = role
        self.s = settings
        self.tracker = tracker
        self.servo = servo
        self.last_measurement: TwttMeasurement | None = None

    def _twtt(self, ep: Endpoint, k: int, tags: dict[str, TagStream], res: NodeEpochResult) -> None:
        s, tr = self.s, self.tracker
        if self.role == "alice":
            ep.send(TagDigest(k, "alice", "D1", tags["D1"].t))
            peer = ep.recv("TagDigest", k, s.timeout)
            fit_ba = _fit_or_none(peer.t, tags["D4"].t, tr.backward_center, s)
            ep.send(_report(k, "alice", "backward", fit_ba))
            fit_ab = _fit_from_report(ep.recv("TwttReport", k, s.timeout))
        else:
            ep.send(TagDigest(k, "bob", "D3", tags["D3"].t))
            peer = ep.recv("TagDigest", k, s.timeout)
            fit_ab = _fit_or_none(peer.t, tags["D2"].t, tr.forward_center, s)
            ep.send(_report(k, "bob", "forward", fit_ab))
            fit_ba = _fit_from_report(ep.recv("TwttReport", k, s.timeout))
        res.forward_fit, res.backward_fit = fit_ab, fit_ba
        try:
            m = extract_offsets(fit_ab, fit_ba, k)
        except NoPeakError as e:
            res.fail(f"twtt: {e}")
            return
        res.measurement = m
        step = 0.0
        if s.servo_enabled:
            new = servo_update(self.servo, m)
            step = new.accumulated_correction - self.servo.accumulated_correction
            self.servo = new
        tr.advance(m, step)
        self.last_measurement = m

    def _qkd(self, ep: Endpoint, k: int, tags: dict[str, TagStream], enc: EncodingParams,
             bob_shift: int, res: NodeEpochResult) -> None:
        s = self.s
        if self.role == "alice":
            local = prepare_local(tags["D5"].t, replace(enc, frame_origin=0), s.key_fraction, s.split_seed)
            ep.send(SiftAnnounce(k, "alice", local.key.frame, local.key.bin))
            peer = ep.recv("SiftAnnounce", k, s.timeout)
            res.symbols, res.frames = key_symbols(local.key, peer.frames, peer.bins)
            digest = ep.recv("TagDigest", k, s.timeout)
            bob_check = assign_bins(digest.t - digest.origin, replace(enc, frame_origin=0))
            check = check_statistics(local.check, bob_check.frame, bob_check.slot, bob_check.bin,
                                     bob_check.offset, timing_window(enc.slot_width, s.baseline))
            res.check = check
            ep.send(BatchConfirm(k, "alice", int(res.symbols.size), check.qber, check.pairs, check.errors,
                                 check.second_moment, check.n_timing))
        else:
            origin = int(bob_shift)
            bob_enc = replace(enc, frame_origin=origin)
            local = prepare_local(tags["D6"].t, bob_enc, s.key_fraction, s.split_seed)
            ep.send(SiftAnnounce(k, "bob", local.key.frame, local.key.bin))
            chk = local.check
            ep.send(TagDigest(k, "bob", "D6-check", origin + chk.frame * enc.frame_length + chk.offset, origin))
            peer = ep.recv("SiftAnnounce", k, s.timeout)
            res.symbols, res.frames = key_symbols(local.key, peer.frames, peer.bins)
            conf = ep.recv("BatchConfirm", k, s.timeout)
            res.check = CheckStatistics(conf.check_pairs, conf.check_errors, conf.check_second_moment,
                                        conf.check_timing_pairs)
            res.bob_shift = origin
            res.corrected_key_times = tags["D6"].t - origin

    def run_epoch(self, ep: Endpoint, k: int, tags: dict[str, TagStream], enc: EncodingParams | None,
                  qts: bool, static_shift: int | None) -> NodeEpochResult:
        res = NodeEpochResult()
        try:
            self._twtt(ep, k, tags, res)
            if enc is None:
                return res
            if qts:
                if res.measurement is None:
                    return res.fail(res.failure or "qkd skipped: no time-transfer estimate")
                shift = int(round(res.measurement.t1))
            else:
                shift = int(static_shift)
            self._qkd(ep, k, tags, enc, shift, res)
        except TransportError as e:
            res.fail(f"transport: {e}")
        return res
