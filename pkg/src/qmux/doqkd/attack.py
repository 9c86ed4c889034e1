"""Secure key rate under an asymmetric delay attack, with and without time-transfer correction."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .encoding import KeyBatch
from .pipeline import QkdSample, run_pipeline
from .security import MIN_PAIRS, Baseline, security_analysis


class ScanAborted(RuntimeError):
    """The tau_eve = 0 anchor produced no secure key, so nothing can be normalized."""


@dataclass(frozen=True)
class AttackPoint:
    tau_eve: float
    skr: float
    normalized: float
    qber: float
    pairs: int
    delta_i: float


@dataclass(frozen=True)
class AttackScan:
    qts: bool
    points: tuple[AttackPoint, ...]
    static_shift: int | None = None

    @property
    def taus(self) -> np.ndarray:
        return np.array([p.tau_eve for p in self.points])

    @property
    def normalized(self) -> np.ndarray:
        return np.array([p.normalized for p in self.points])


def _check_taus(tau_list) -> list[float]:
    taus = [float(t) for t in tau_list]
    if not taus:
        raise ValueError("empty tau_eve list")
    if 0.0 not in taus:
        raise ValueError("tau_eve list must include 0 (normalization anchor)")
    if any(t < 0 for t in taus):
        raise ValueError("tau_eve values must be >= 0")
    return taus


def _point(tau: float, batch: KeyBatch | None, sec, skr0: float | None) -> AttackPoint:
    skr = sec.skr if sec is not None else 0.0
    pairs = batch.pairs if batch is not None else 0
    qber = batch.qber if batch is not None and pairs else math.nan
    norm = skr / skr0 if skr0 else math.nan
    return AttackPoint(tau, skr, norm, qber, pairs, sec.delta_i if sec is not None else 0.0)


def _normalize(taus, raw) -> tuple[AttackPoint, ...]:
    skr0 = raw[taus.index(0.0)][2]
    if skr0 is None or not skr0 > 0:
        raise ScanAborted("secure key rate at tau_eve = 0 is not positive; scan aborted")
    return tuple(AttackPoint(t, skr, skr / skr0, q, n, di) for t, (q, n, skr, di) in zip(taus, raw))


def _fix_encoding(cfg):
    """Calibrate once so every point of the scan shares the same encoding parameters."""
    from ..netharness.scenario import calibrate_encoding

    if cfg.qkd.grid is None:
        return cfg
    enc = calibrate_encoding(cfg).params
    return replace(cfg, qkd=replace(cfg.qkd, encoding=enc, grid=None))


def static_calibration(report) -> int:
    """Bob's fixed frame shift from an attack-free run: the mean forward peak position."""
    t1 = [e.t1 for e in report.epochs if e.twtt_ok]
    if not t1:
        raise ScanAborted("baseline run produced no time-transfer estimate")
    return int(round(float(np.mean(t1))))


def attack_scan(cfg, tau_list, qts_enabled: bool, transport: str = "inprocess",
                keep_baseline: bool = False):
    """Normalized pooled SKR for each tau_eve (ps) in ``tau_list`` on a forward-direction attack.

    With ``qts_enabled`` every run uses the full servo loop and per-epoch frame
    alignment from time transfer. Without it Bob keeps the frame alignment of
    an attack-free calibration run and never steers his clock.
    """
    from ..channel import AttackParams
    from ..netharness.scenario import run_scenario

    taus = _check_taus(tau_list)
    cfg = _fix_encoding(cfg)
    baseline_report = None
    shift = None
    if qts_enabled:
        run_cfg = replace(cfg, qkd=replace(cfg.qkd, qts=True))
    else:
        shift = cfg.qkd.static_shift
        if shift is None:
            base_cfg = replace(cfg, attack=None, qkd=replace(cfg.qkd, qts=True), twtt=replace(cfg.twtt, servo=False))
            baseline_report = run_scenario(base_cfg, transport=transport, keep_samples=keep_baseline)
            shift = static_calibration(baseline_report)
        run_cfg = replace(cfg, qkd=replace(cfg.qkd, qts=False, static_shift=float(shift)),
                          twtt=replace(cfg.twtt, servo=False))
    raw = []
    for tau in taus:
        attack = AttackParams(tau_eve=tau, direction="forward") if tau > 0 else None
        rep = run_scenario(replace(run_cfg, attack=attack, attack_start_epoch=0), transport=transport)
        sec = rep.security
        p = _point(tau, rep.pooled, sec, None)
        raw.append((p.qber, p.pairs, p.skr, p.delta_i))
    scan = AttackScan(qts_enabled, _normalize(taus, raw), None if shift is None else int(shift))
    if keep_baseline:
        return scan, baseline_report
    return scan


def delay_injection_scan(cfg, baseline_report, tau_list, static_shift: int) -> AttackScan:
    """Offline reference: add tau_eve to Bob's recorded time-basis tags of an attack-free run
    and re-run key extraction with the fixed, uncorrected frame alignment."""
    from ..netharness.scenario import split_seed

    taus = _check_taus(tau_list)
    if not baseline_report.samples:
        raise ValueError("baseline report carries no samples; run it with keep_samples=True")
    enc = baseline_report.encoding
    baseline = Baseline(cfg.qkd.baseline_fwhm)
    raw = []
    for tau in taus:
        batches = []
        for smp in baseline_report.samples:
            sample = QkdSample(smp.alice_key_times, smp.bob_key_times + np.int64(round(tau)), static_shift,
                               cfg.epoch_period)
            batches.append(run_pipeline(sample, enc, cfg.security, baseline, split_seed(cfg)))
        pooled = KeyBatch.concat(batches)
        sec = security_analysis(pooled, cfg.security, baseline) if pooled.pairs >= MIN_PAIRS else None
        p = _point(tau, pooled, sec, None)
        raw.append((p.qber, p.pairs, p.skr, p.delta_i))
    return AttackScan(False, _normalize(taus, raw), static_shift)
