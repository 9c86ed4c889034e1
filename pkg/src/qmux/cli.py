"""Command-line runner: executes scenarios and writes CSV/JSON artifacts for plotting."""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import PRESETS, ConfigError, load, load_preset

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


class UsageError(ValueError):
    """Bad command-line value; reported like a config error."""


# -- output helpers ---------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


class RunOutput:
    """Collects emitted files and writes the run manifest."""

    def __init__(self, out_dir: Path, command: str, cfg, config_path: str):
        self.dir = out_dir
        self.command = command
        self.cfg = cfg
        self.config_path = config_path
        self.files: dict[str, str] = {}
        self.summary: dict = {}
        out_dir.mkdir(parents=True, exist_ok=True)

    def _write(self, name: str, data: bytes) -> None:
        (self.dir / name).write_bytes(data)
        self.files[name] = hashlib.sha256(data).hexdigest()

    def csv(self, name: str, header: list[str], rows) -> None:
        buf = io.StringIO()
        buf.write(f"# config_sha256={self.cfg.digest()} seed={self.cfg.seed}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
        self._write(name, buf.getvalue().encode("utf-8"))

    def binary(self, name: str, data: bytes) -> None:
        self._write(name, data)

    def manifest(self) -> dict:
        def clean(v):
            if isinstance(v, float) and not math.isfinite(v):
                return None
            return v

        m = {
            "scenario": self.cfg.name,
            "command": self.command,
            "config_path": self.config_path,
            "config_sha256": self.cfg.digest(),
            "seed": self.cfg.seed,
            "output_dir": str(self.dir),
            "files": [{"name": n, "sha256": h} for n, h in sorted(self.files.items())],
            "summary": {k: clean(v) for k, v in self.summary.items()},
            "version": __version__,
        }
        text = json.dumps(m, indent=2, sort_keys=True) + "\n"
        (self.dir / "manifest.json").write_text(text, encoding="utf-8")
        return m


def _load_config(args):
    if args.config and args.preset:
        raise UsageError("--config and --preset are mutually exclusive")
    if args.config:
        cfg, origin = load(args.config), str(args.config)
    else:
        name = args.preset or "common-clock"
        cfg, origin = load_preset(name), f"preset:{name}"
    if args.seed is not None:
        cfg = replace(cfg, seed=int(args.seed))
    return cfg, origin


def _out(args, command: str, cfg, origin: str) -> RunOutput:
    return RunOutput(Path(args.out or f"out-{command}"), command, cfg, origin)


def _log(args, msg: str) -> None:
    if not args.quiet:
        print(msg, file=sys.stderr)


# -- subcommands ------------------------------------------------------------

def cmd_twtt(args) -> int:
    from .coincidence import cross_correlate
    from .netharness.scenario import compress, initial_link_estimate, run_scenario
    from .netharness.world import simulate_epoch
    from .qtwtt import stability_report

    cfg, origin = _load_config(args)
    if args.coincidences > 0:
        cfg = compress(cfg, args.coincidences, args.epoch_period or 5.0, args.duration or 4000.0)
    else:
        cfg = replace(cfg, qkd=replace(cfg.qkd, enabled=False), epoch_period=args.epoch_period or cfg.epoch_period,
                      duration=args.duration or cfg.duration)
    out = _out(args, "twtt", cfg, origin)
    _log(args, f"twtt: {cfg.n_epochs} epochs of {cfg.epoch_period} s")
    rep = run_scenario(cfg, transport=args.transport)

    out.csv("twtt_epochs.csv",
            ["epoch", "time_s", "t1_ps", "t2_ps", "offset_ps", "link_delay_ps", "offset_uncertainty_ps",
             "fwhm_forward_ps", "fwhm_backward_ps", "servo_correction_ps", "true_offset_ps", "ok"],
            ((e.epoch, e.epoch * cfg.epoch_period, e.t1, e.t2, e.t0_est, e.link_delay_est, e.t0_uncertainty,
              e.fwhm_forward, e.fwhm_backward, e.servo_correction, e.true_offset, e.twtt_ok)
             for e in rep.epochs))

    ms = rep.measurements()
    out.summary.update(epochs=len(rep.epochs), failed_epochs=len(rep.epochs) - len(ms))
    if len(ms) == len(rep.epochs) and len(ms) >= 30:
        st = stability_report(ms, cfg.epoch_period)
        out.csv("tdev.csv", ["tau_s", "tdev_ps"], st.rows())
        out.summary.update(offset_std_ps=st.std, tdev_slope=st.slope, tdev_first_ps=float(st.tdev[0]))
    else:
        _log(args, "twtt: too few consecutive epochs for a TDEV curve; tdev.csv not written")

    # coincidence histograms of the first epoch around the initial link estimate
    ep = simulate_epoch(cfg, 0, 0.0)
    l0 = initial_link_estimate(cfg)
    for name, a, b in (("histogram_forward.csv", ep.alice["D1"], ep.bob["D2"]),
                       ("histogram_backward.csv", ep.bob["D3"], ep.alice["D4"])):
        h = cross_correlate(a, b, l0, cfg.twtt.half_window, cfg.twtt.bin_width)
        out.csv(name, ["bin_center_ps", "count"], h.rows())
    out.manifest()
    return EXIT_OK


def _key_bytes(symbols: np.ndarray) -> bytes:
    return np.ascontiguousarray(symbols, dtype="<u2").tobytes()


def cmd_qkd(args) -> int:
    from .netharness.scenario import run_scenario

    cfg, origin = _load_config(args)
    if not cfg.qkd.enabled:
        raise UsageError("qkd.enabled is false in this configuration")
    out = _out(args, "qkd", cfg, origin)
    _log(args, f"qkd: {cfg.n_epochs} epochs of {cfg.epoch_period} s")
    rep = run_scenario(cfg, transport=args.transport)

    def sec(e, f):
        return getattr(e.security, f) if e.security is not None else math.nan

    out.csv("qkd_epochs.csv",
            ["epoch", "pairs", "qber", "rkr_bps", "i_ab", "chi_ae", "delta_fk", "delta_i", "skr_bps",
             "bob_count_rate"],
            ((e.epoch, e.pairs, e.qber, e.rkr, sec(e, "i_ab"), sec(e, "chi_ae"), sec(e, "delta_fk"),
              sec(e, "delta_i"), sec(e, "skr"), e.bob_count_rate) for e in rep.epochs))
    if rep.optimization is not None:
        out.csv("encoding_scan.csv", ["D", "I", "bin_width_ps", "pairs", "qber", "skr_bps", "delta_i"],
                ((c.params.D, c.params.I, c.params.bin_width, c.pairs, c.qber, c.skr, c.delta_i)
                 for c in rep.optimization.table))
    if rep.pooled is not None:
        out.binary("key_alice.bin", _key_bytes(rep.pooled.symbols_a))
        out.binary("key_bob.bin", _key_bytes(rep.pooled.symbols_b))
    enc = rep.encoding
    out.summary.update(D=enc.D, I=enc.I, bin_width_ps=enc.bin_width,
                       cap_violated=bool(rep.optimization.cap_violated) if rep.optimization else False,
                       pairs=rep.pooled.pairs if rep.pooled else 0,
                       qber=rep.pooled.qber if rep.pooled and rep.pooled.pairs else None)
    if rep.security is not None:
        s = rep.security
        out.summary.update(i_ab=s.i_ab, chi_ae=s.chi_ae, delta_fk=s.delta_fk, delta_i=s.delta_i, skr_bps=s.skr,
                           flags=list(s.flags))
    out.manifest()
    return EXIT_OK


def _parse_taus(text: str) -> list[float]:
    try:
        taus = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"--tau-list: cannot parse {text!r}") from None
    if 0.0 not in taus:
        raise UsageError("--tau-list must include 0 (normalization anchor)")
    if any(t < 0 for t in taus):
        raise UsageError("--tau-list values must be >= 0")
    return taus


def cmd_attack_scan(args) -> int:
    from .doqkd.attack import attack_scan, delay_injection_scan

    taus = _parse_taus(args.tau_list)
    cfg, origin = _load_config(args)
    if not cfg.qkd.enabled:
        raise UsageError("qkd.enabled is false in this configuration")
    qts = args.qts == "on"
    out = _out(args, "attack-scan", cfg, origin)
    _log(args, f"attack-scan: {len(taus)} points, qts {args.qts}")
    want_oracle = args.oracle and not qts
    res = attack_scan(cfg, taus, qts, transport=args.transport, keep_baseline=want_oracle)
    scan, base = res if want_oracle else (res, None)
    header = ["tau_eve_ps", "normalized_skr", "skr_bps", "qber", "pairs", "delta_i"]

    def rows(s):
        return ((p.tau_eve, p.normalized, p.skr, p.qber, p.pairs, p.delta_i) for p in s.points)

    out.csv("attack_scan.csv", header, rows(scan))
    out.summary.update(qts=qts, static_shift_ps=scan.static_shift,
                       normalized_at_max_tau=float(scan.points[-1].normalized))
    if want_oracle:
        fixed = replace(cfg, qkd=replace(cfg.qkd, encoding=base.encoding, grid=None))
        ref = delay_injection_scan(fixed, base, taus, scan.static_shift)
        out.csv("attack_scan_oracle.csv", header, rows(ref))
        out.summary.update(oracle_max_abs_diff=float(np.max(np.abs(ref.normalized - scan.normalized))))
    out.manifest()
    return EXIT_OK


def cmd_selftest(args) -> int:
    from .selftest import run_suites

    results = run_suites(inject_fault=args.inject_fault)
    failed = 0
    for r in results:
        status = "PASS" if r.ok else "FAIL"
        failed += not r.ok
        print(f"{status} {r.name:<20} {r.seconds:7.3f} s  {r.detail}")
    print(f"{len(results) - failed}/{len(results)} suites passed")
    return EXIT_OK if failed == 0 else EXIT_RUNTIME


# -- entry point ------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qmux", description="Entangled-photon time transfer and QKD simulator.")
    p.add_argument("--version", action="version", version=f"qmux {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", metavar="PATH", help="scenario TOML file")
        sp.add_argument("--preset", metavar="NAME", choices=PRESETS, help="shipped preset (default common-clock)")
        sp.add_argument("--seed", type=int, metavar="N", help="override the scenario seed")
        sp.add_argument("--out", metavar="DIR", help="output directory (default out-<command>)")
        sp.add_argument("--transport", choices=("inprocess", "socket"), default="inprocess")
        sp.add_argument("--quiet", action="store_true")

    t = sub.add_parser("twtt", help="time-transfer run: epoch series, TDEV curve, histograms")
    common(t)
    t.add_argument("--coincidences", type=float, default=5000.0,
                   help="rescale sources to this many coincidences per epoch (0 keeps the config)")
    t.add_argument("--epoch-period", type=float, help="seconds per epoch (default 5 when rescaling)")
    t.add_argument("--duration", type=float, help="total seconds (default 4000 when rescaling)")
    t.set_defaults(func=cmd_twtt)

    q = sub.add_parser("qkd", help="key distribution run: per-epoch key metrics and key files")
    common(q)
    q.set_defaults(func=cmd_qkd)

    a = sub.add_parser("attack-scan", help="normalized SKR against an asymmetric forward delay")
    common(a)
    a.add_argument("--tau-list", default=",".join(str(x) for x in range(0, 121, 10)),
                   help="comma-separated delays in ps; must include 0")
    a.add_argument("--qts", choices=("on", "off"), default="off", help="time-transfer correction")
    a.add_argument("--oracle", action="store_true", help="also write the offline delay-injection reference")
    a.set_defaults(func=cmd_attack_scan)

    s = sub.add_parser("selftest", help="run the reference-oracle suite")
    s.add_argument("--inject-fault", choices=("sift",), help="corrupt a component to check the suite catches it")
    s.set_defaults(func=cmd_selftest)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, UsageError) as e:
        print(f"qmux: config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as e:  # noqa: BLE001 - every other failure is a runtime error
        print(f"qmux: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
