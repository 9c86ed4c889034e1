"""Epoch-by-epoch two-node run of a scenario."""
from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from ..coincidence import cross_correlate, fit_gaussian_peak
from ..doqkd.encoding import EncodingParams, KeyBatch
from ..doqkd.optimize import OptimizationResult, encoding_grid, optimize_encoding
from ..doqkd.pipeline import QkdSample
from ..doqkd.security import MIN_PAIRS, Baseline, SecurityReport, security_analysis
from ..qtwtt import ServoState, TwttMeasurement
from ..timebase import derive_rng
from .config import ScenarioConfig
from .node import Node, NodeSettings, TwttTracker
from .transport import FaultPlan, make_link
from .world import attack_for, simulate_epoch


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    ok: bool
    failure: str
    t1: float
    t2: float
    t0_est: float
    link_delay_est: float
    t0_uncertainty: float
    fwhm_forward: float
    fwhm_backward: float
    servo_correction: float  # applied to Bob's clock during this epoch
    true_offset: float
    tau_eve: float
    alice_count_rate: float  # D5 clicks / s
    bob_count_rate: float  # D6 clicks / s
    bob_shift: int | None
    pairs: int
    qber: float
    rkr: float
    check_pairs: int
    check_qber: float
    check_second_moment: float
    security: SecurityReport | None

    @property
    def twtt_ok(self) -> bool:
        return math.isfinite(self.t0_est)

    def measurement(self) -> TwttMeasurement | None:
        if not self.twtt_ok:
            return None
        return TwttMeasurement(self.epoch, self.t1, self.t2, self.t0_est, self.link_delay_est, self.t0_uncertainty)


@dataclass(frozen=True, eq=False)
class EpochSample:
    """Raw time-basis data of one epoch, kept on request for oracles and offline analysis."""

    alice_key_times: np.ndarray  # D5, Alice local time
    bob_key_times: np.ndarray  # D6, Bob steered local time
    bob_shift: int | None


@dataclass(frozen=True, eq=False)
class ScenarioReport:
    name: str
    seed: int
    config_digest: str
    encoding: EncodingParams | None
    optimization: OptimizationResult | None
    epochs: tuple[EpochRecord, ...]
    batches: tuple[KeyBatch | None, ...]
    pooled: KeyBatch | None
    security: SecurityReport | None
    samples: tuple[EpochSample, ...] = field(default=())

    def measurements(self) -> list[TwttMeasurement]:
        return [m for m in (e.measurement() for e in self.epochs) if m is not None]

    def canonical(self) -> dict:
        def num(x):
            if x is None:
                return None
            if isinstance(x, (bool, np.bool_)):
                return bool(x)
            if isinstance(x, (int, np.integer)):
                return int(x)
            return repr(float(x))

        def sec(r: SecurityReport | None):
            if r is None:
                return None
            return {k: (list(v) if k == "flags" else num(v)) for k, v in r.__dict__.items()}

        def sym_hash(b: KeyBatch | None):
            if b is None:
                return None
            h = hashlib.sha256()
            for arr in (b.symbols_a, b.symbols_b, b.frames):
                h.update(np.ascontiguousarray(arr, dtype="<i8").tobytes())
            return h.hexdigest()

        epochs = []
        for e in self.epochs:
            d = {k: (sec(v) if k == "security" else v if isinstance(v, str) else num(v))
                 for k, v in e.__dict__.items()}
            epochs.append(d)
        return {
            "name": self.name,
            "seed": self.seed,
            "config": self.config_digest,
            "encoding": None if self.encoding is None else list(self.encoding.key()),
            "epochs": epochs,
            "batches": [sym_hash(b) for b in self.batches],
            "security": sec(self.security),
        }

    def digest(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def split_seed(cfg: ScenarioConfig) -> int:
    return int(derive_rng(cfg.seed, "key-split").integers(0, 2**62))


def initial_link_estimate(cfg: ScenarioConfig) -> float:
    est = cfg.twtt.initial_link_estimate
    return float(cfg.link.base_delay if est is None else est)


def calibrate_encoding(cfg: ScenarioConfig) -> OptimizationResult:
    """Pick encoding parameters from a separate, attack-free calibration acquisition.

    The forward peak position of the calibration data sets Bob's frame
    alignment, exactly as time transfer does during the run.
    """
    grid = cfg.qkd.grid
    if grid is None:
        raise ValueError("no optimization grid configured")
    cal_seed = int(derive_rng(cfg.seed, "calibration").integers(0, 2**62))
    cal = replace(cfg, seed=cal_seed, epoch_period=grid.sample_duration, duration=2 * grid.sample_duration,
                  attack=None)
    ep = simulate_epoch(cal, 0, 0.0, attack=None)
    h = cross_correlate(ep.alice["D1"].t, ep.bob["D2"].t, initial_link_estimate(cfg), cfg.twtt.half_window,
                        cfg.twtt.bin_width)
    shift = int(round(fit_gaussian_peak(h).center))
    sample = QkdSample(ep.alice["D5"].t, ep.bob["D6"].t, shift, grid.sample_duration)
    cands = encoding_grid(list(grid.D), list(grid.I), list(grid.bin_width))
    return optimize_encoding(cands, grid.qber_cap, sample, cfg.security, Baseline(cfg.qkd.baseline_fwhm),
                             split_seed(cfg))


def _nan() -> float:
    return math.nan


def run_scenario(cfg: ScenarioConfig, transport: str = "inprocess", latency: float = 0.0,
                 faults: FaultPlan | None = None, timeout: float = 60.0, keep_samples: bool = False,
                 progress=None) -> ScenarioReport:
    """Run every epoch of ``cfg`` with Alice and Bob as separate tasks talking over ``transport``.

    The report depends only on ``cfg``; transport, latency and thread timing
    do not change it (faults do, by design).
    """
    optimization = None
    enc = None
    if cfg.qkd.enabled:
        if cfg.qkd.grid is not None:
            optimization = calibrate_encoding(cfg)
            enc = optimization.params
        else:
            enc = cfg.qkd.encoding
    baseline = Baseline(cfg.qkd.baseline_fwhm)
    settings = NodeSettings(half_window=cfg.twtt.half_window, bin_width=cfg.twtt.bin_width,
                            servo_enabled=cfg.twtt.servo, timeout=timeout,
                            key_fraction=cfg.security.key_fraction, split_seed=split_seed(cfg),
                            baseline=baseline)
    l0 = initial_link_estimate(cfg)
    servo = ServoState(gain=cfg.twtt.servo_gain, epoch_period=cfg.epoch_period)
    alice = Node("alice", settings, TwttTracker(l0, l0), servo)
    bob = Node("bob", settings, TwttTracker(l0, l0), servo)
    static = cfg.qkd.static_shift
    static_shift = int(round(l0 if static is None else static))

    records: list[EpochRecord] = []
    batches: list[KeyBatch | None] = []
    samples: list[EpochSample] = []
    steer = 0.0
    link = make_link(transport, latency, faults)
    try:
        with ThreadPoolExecutor(max_workers=2, thread_name_prefix="node") as pool:
            for k in range(cfg.n_epochs):
                streams = simulate_epoch(cfg, k, steer)
                link.start_epoch(k)
                fa = pool.submit(alice.run_epoch, link.alice, k, streams.alice, enc, cfg.qkd.qts, static_shift)
                fb = pool.submit(bob.run_epoch, link.bob, k, streams.bob, enc, cfg.qkd.qts, static_shift)
                ra, rb = fa.result(), fb.result()

                m = rb.measurement or ra.measurement
                ok = ra.ok and rb.ok
                batch = None
                sec = None
                if ok and enc is not None:
                    batch = KeyBatch(ra.symbols, rb.symbols, ra.frames, enc.D, cfg.epoch_period, check=ra.check)
                    if batch.pairs >= MIN_PAIRS:
                        sec = security_analysis(batch, cfg.security, baseline)
                attack = attack_for(cfg, k)
                ff, fbw = rb.forward_fit, ra.backward_fit
                records.append(EpochRecord(
                    epoch=k, ok=ok, failure=ra.failure or rb.failure,
                    t1=m.t1 if m else _nan(), t2=m.t2 if m else _nan(),
                    t0_est=m.t0_est if m else _nan(), link_delay_est=m.link_delay_est if m else _nan(),
                    t0_uncertainty=m.t0_uncertainty if m else _nan(),
                    fwhm_forward=ff.fwhm if ff else _nan(), fwhm_backward=fbw.fwhm if fbw else _nan(),
                    servo_correction=steer, true_offset=streams.true_offset,
                    tau_eve=attack.tau_eve if attack else 0.0,
                    alice_count_rate=len(streams.alice["D5"]) / cfg.epoch_period,
                    bob_count_rate=len(streams.bob["D6"]) / cfg.epoch_period,
                    bob_shift=rb.bob_shift,
                    pairs=batch.pairs if batch else 0,
                    qber=batch.qber if batch and batch.pairs else _nan(),
                    rkr=batch.rkr if batch else 0.0,
                    check_pairs=batch.check.pairs if batch and batch.check else 0,
                    check_qber=batch.check.qber if batch and batch.check else _nan(),
                    check_second_moment=batch.check.second_moment if batch and batch.check else _nan(),
                    security=sec,
                ))
                batches.append(batch)
                if keep_samples:
                    samples.append(EpochSample(streams.alice["D5"].t, streams.bob["D6"].t, rb.bob_shift))
                steer = bob.servo.accumulated_correction if cfg.twtt.servo else 0.0
                if progress is not None:
                    progress(records[-1])
    finally:
        link.close()

    good = [b for b in batches if b is not None]
    pooled = KeyBatch.concat(good) if good else None
    pooled_sec = None
    if pooled is not None and pooled.pairs >= MIN_PAIRS:
        pooled_sec = security_analysis(pooled, cfg.security, baseline)
    return ScenarioReport(cfg.name, cfg.seed, cfg.digest(), enc, optimization, tuple(records), tuple(batches),
                          pooled, pooled_sec, tuple(samples))


def compress(cfg: ScenarioConfig, coincidences_per_epoch: float = 5000.0, epoch_period: float | None = None,
             duration: float | None = None) -> ScenarioConfig:
    """Time-transfer-only variant whose pair rates give the requested coincidences per epoch.

    All forward photons go to the frequency-basis detectors and QKD is
    disabled, so long stability runs stay cheap.
    """
    p = cfg.epoch_period if epoch_period is None else float(epoch_period)
    cfg = replace(cfg, epoch_period=p, duration=cfg.duration if duration is None else float(duration))
    d, t = cfg.detectors, cfg.link.loss_transmittance
    fwd = coincidences_per_epoch / (p * d.d1.efficiency * d.d2.efficiency * t)
    bwd = coincidences_per_epoch / (p * d.d3.efficiency * d.d4.efficiency * t)
    return replace(
        cfg,
        ebs1=replace(cfg.ebs1, pair_rate=fwd),
        ebs2=replace(cfg.ebs2, pair_rate=bwd),
        routing=replace(cfg.routing, alice_time_fraction=0.0, bob_time_fraction=0.0),
        qkd=replace(cfg.qkd, enabled=False),
    )
