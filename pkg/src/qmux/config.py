"""TOML scenario files and the shipped presets.

A file may start from a preset with ``base = "<preset>"`` and override any
field. Unknown keys are errors; every diagnostic names the offending field.
"""
from __future__ import annotations

import copy
from importlib import resources
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .channel import AttackParams, DriftSpec, LinkState
from .doqkd.encoding import EncodingParams
from .doqkd.security import EpsilonBudget, SecurityParams, make_excess_noise_model
from .netharness.config import (CountModulation, DetectorBank, EncodingGrid, QkdSettings, Routing,
                                ScenarioConfig, TwttSettings)
from .photonics import DetectorParams, SourceParams
from .timebase import ClockModel

PRESETS = ("common-clock", "remote-clock", "noiseless")


class ConfigError(ValueError):
    """Invalid configuration; ``field`` is the dotted path of the offending entry."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


class _Section:
    """Consumes keys of one table, checking types and reporting leftovers as unknown."""

    def __init__(self, data, path: str):
        if not isinstance(data, dict):
            raise ConfigError(path, "expected a table")
        self.data = dict(data)
        self.path = path

    def _p(self, key: str) -> str:
        return f"{self.path}.{key}" if self.path else key

    def sub(self, key: str) -> "_Section":
        return _Section(self.data.pop(key, {}), self._p(key))

    def has(self, key: str) -> bool:
        return key in self.data

    def num(self, key: str, default=None, integer: bool = False):
        if key not in self.data:
            if default is None:
                raise ConfigError(self._p(key), "missing required value")
            return default
        v = self.data.pop(key)
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(self._p(key), f"expected a number, got {v!r}")
        if integer:
            if int(v) != v:
                raise ConfigError(self._p(key), f"expected an integer, got {v!r}")
            return int(v)
        return float(v)

    def opt_num(self, key: str):
        return self.num(key) if key in self.data else None

    def flag(self, key: str, default: bool) -> bool:
        v = self.data.pop(key, default)
        if not isinstance(v, bool):
            raise ConfigError(self._p(key), f"expected true or false, got {v!r}")
        return v

    def text(self, key: str, default: str) -> str:
        v = self.data.pop(key, default)
        if not isinstance(v, str):
            raise ConfigError(self._p(key), f"expected a string, got {v!r}")
        return v

    def int_list(self, key: str, default) -> tuple[int, ...]:
        v = self.data.pop(key, default)
        if isinstance(v, int) and not isinstance(v, bool):
            v = [v]
        if not isinstance(v, (list, tuple)) or not all(isinstance(x, int) and not isinstance(x, bool) for x in v):
            raise ConfigError(self._p(key), f"expected a list of integers, got {v!r}")
        return tuple(v)

    def rest(self) -> dict:
        out, self.data = self.data, {}
        return out

    def done(self) -> None:
        if self.data:
            key = sorted(self.data)[0]
            raise ConfigError(self._p(key), "unknown key")


def _build(section_path: str, factory, **kwargs):
    try:
        return factory(**kwargs)
    except ValueError as e:
        raise ConfigError(section_path, str(e)) from None


def _detector(s: _Section, base: DetectorParams) -> DetectorParams:
    d = _build(s.path, DetectorParams,
               efficiency=s.num("efficiency", base.efficiency),
               jitter_fwhm=s.num("jitter_fwhm", base.jitter_fwhm),
               dark_rate=s.num("dark_rate", base.dark_rate),
               dead_time=s.num("dead_time", base.dead_time))
    s.done()
    return d


def _clock(s: _Section) -> ClockModel:
    c = _build(s.path, ClockModel,
               offset=s.num("offset", 0.0), drift_rate=s.num("drift_rate", 0.0),
               white_phase_sigma=s.num("white_phase_sigma", 0.0), seed=s.num("seed", 0, integer=True),
               random_walk=s.num("random_walk", 0.0))
    s.done()
    return c


def _source(s: _Section, label: str) -> SourceParams:
    src = _build(s.path, SourceParams, pair_rate=s.num("pair_rate"),
                 correlation_sigma=s.num("correlation_sigma", 0.0), label=label)
    s.done()
    return src


def from_dict(data: dict) -> ScenarioConfig:
    root = _Section(data, "")
    root.data.pop("base", None)
    name = root.text("name", "scenario")
    seed = root.num("seed", 0, integer=True)
    epoch_period = root.num("epoch_period", 5.0)
    duration = root.num("duration", 10.0)

    src = root.sub("source")
    ebs1 = _source(src.sub("ebs1"), "ET-EBS1")
    ebs2 = _source(src.sub("ebs2"), "ET-EBS2")
    src.done()

    dets = root.sub("detectors")
    default = _detector(dets.sub("default"), DetectorParams())
    bank = {}
    for k in ("d1", "d2", "d3", "d4", "d5", "d6"):
        bank[k] = _detector(dets.sub(k), default) if dets.has(k) else default
    dets.done()

    ls = root.sub("link")
    ds = ls.sub("drift")
    drift = _build(ds.path, DriftSpec, amplitude=ds.num("amplitude", 0.0), period=ds.num("period", 3600.0),
                   shape=ds.text("shape", "sinusoid"), seed=ds.num("seed", 0, integer=True))
    ds.done()
    link = _build(ls.path, LinkState, base_delay=ls.num("base_delay", 588_000_000.0), drift=drift,
                  loss_transmittance=ls.num("loss_transmittance", 0.015),
                  residual_broadening_sigma=ls.num("residual_broadening_sigma", 0.0))
    ls.done()

    attack = None
    start_epoch = 0
    if root.has("attack"):
        a = root.sub("attack")
        start_epoch = a.num("start_epoch", 0, integer=True)
        attack = _build(a.path, AttackParams, tau_eve=a.num("tau_eve", 0.0),
                        direction=a.text("direction", "forward"))
        a.done()

    cs = root.sub("clock")
    alice_clock = _clock(cs.sub("alice"))
    bob_clock = _clock(cs.sub("bob"))
    cs.done()

    rs = root.sub("routing")
    routing = _build(rs.path, Routing, alice_time_fraction=rs.num("alice_time_fraction", 0.5),
                     bob_time_fraction=rs.num("bob_time_fraction", 0.5), mode=rs.text("mode", "independent"))
    rs.done()

    ts = root.sub("twtt")
    twtt = _build(ts.path, TwttSettings, bin_width=ts.num("bin_width", 1, integer=True),
                  half_window=ts.num("half_window", 4096.0), servo=ts.flag("servo", True),
                  servo_gain=ts.num("servo_gain", 1.0), initial_link_estimate=ts.opt_num("initial_link_estimate"))
    ts.done()

    qs = root.sub("qkd")
    enc = None
    if qs.has("encoding"):
        es = qs.sub("encoding")
        enc = _build(es.path, EncodingParams, D=es.num("D", 6, integer=True), I=es.num("I", 3, integer=True),
                     bin_width=es.num("bin_width", 110, integer=True))
        es.done()
    grid = None
    if qs.has("optimization"):
        gs = qs.sub("optimization")
        grid = _build(gs.path, EncodingGrid, D=gs.int_list("D", (6,)), I=gs.int_list("I", (3,)),
                      bin_width=gs.int_list("bin_width", tuple(range(50, 151, 10))),
                      qber_cap=gs.num("qber_cap", 0.05), sample_duration=gs.num("sample_duration", 5.0))
        gs.done()
    qkd = _build(qs.path, QkdSettings, enabled=qs.flag("enabled", True), qts=qs.flag("qts", True),
                 static_shift=qs.opt_num("static_shift"),
                 encoding=enc if (enc or grid) else EncodingParams(), grid=grid,
                 baseline_fwhm=qs.num("baseline_fwhm", 76.0))
    qs.done()

    ss = root.sub("security")
    es = ss.sub("epsilon")
    eps = _build(es.path, EpsilonBudget, ver=es.num("ver", 1e-9), pa=es.num("pa", 1e-9), pe=es.num("pe", 1e-10),
                 bar=es.num("bar", 1e-9), n_pe=es.num("n_pe", 10, integer=True))
    es.done()
    ns = ss.sub("excess_noise")
    model_name = ns.text("model", "gaussian-thermal")
    model_kwargs = ns.rest()
    for k, v in model_kwargs.items():
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"{ns.path}.{k}", f"expected a number, got {v!r}")
    try:
        model = make_excess_noise_model(model_name, **model_kwargs)
    except TypeError as e:
        raise ConfigError(ns.path, str(e)) from None
    except ValueError as e:
        raise ConfigError(f"{ns.path}.model", str(e)) from None
    security = _build(ss.path, SecurityParams, beta=ss.num("beta", 0.9), epsilon=eps,
                      key_fraction=ss.num("key_fraction", 0.7), excess_noise_model=model,
                      finite_size=ss.flag("finite_size", True))
    ss.done()

    ms = root.sub("modulation")
    modulation = _build(ms.path, CountModulation, depth=ms.num("depth", 0.0), period=ms.num("period", 600.0))
    ms.done()

    root.done()
    return _build("", ScenarioConfig, name=name, seed=seed, epoch_period=epoch_period, duration=duration,
                  ebs1=ebs1, ebs2=ebs2, detectors=DetectorBank(**bank), link=link, attack=attack,
                  attack_start_epoch=start_epoch, alice_clock=alice_clock, bob_clock=bob_clock,
                  routing=routing, twtt=twtt, qkd=qkd, security=security, modulation=modulation)


def preset_text(name: str) -> str:
    if name not in PRESETS:
        raise ConfigError("base", f"unknown preset {name!r}; available: {', '.join(PRESETS)}")
    return resources.files("qmux.presets").joinpath(f"{name}.toml").read_text(encoding="utf-8")


def _parse(text: str, origin: str) -> dict:
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError("", f"{origin}: {e}") from None


def resolve(data: dict, seen: tuple[str, ...] = ()) -> dict:
    """Expand ``base = "<preset>"`` chains into one merged table."""
    base = data.get("base")
    if base is None:
        return data
    if not isinstance(base, str):
        raise ConfigError("base", f"expected a preset name, got {base!r}")
    if base in seen:
        raise ConfigError("base", f"preset cycle through {base!r}")
    parent = resolve(_parse(preset_text(base), f"preset {base}"), seen + (base,))
    merged = _merge(parent, {k: v for k, v in data.items() if k != "base"})
    return merged


def loads(text: str, origin: str = "<string>") -> ScenarioConfig:
    return from_dict(resolve(_parse(text, origin)))


def load(path: str | Path) -> ScenarioConfig:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError("", f"cannot read {p}: {e.strerror}") from None
    return loads(text, str(p))


def load_preset(name: str) -> ScenarioConfig:
    return loads(f'base = "{name}"\n', f"preset {name}")
