import pytest

from qmux.config import PRESETS, ConfigError, load, load_preset, loads, preset_text
from qmux.doqkd.security import GaussianExcessNoise, NoLeakage


@pytest.mark.parametrize("name", PRESETS)
def test_presets_load(name):
    cfg = load_preset(name)
    assert cfg.name == name and cfg.n_epochs >= 2
    assert preset_text(name).strip()


def test_common_clock_calibration_values():
    cfg = load_preset("common-clock")
    assert cfg.detectors.d1.jitter_fwhm == 53.74
    assert cfg.qkd.grid is not None and cfg.qkd.grid.qber_cap == 0.05
    assert cfg.qkd.baseline_fwhm == 76.0
    assert isinstance(cfg.security.excess_noise_model, GaussianExcessNoise)
    assert not cfg.twtt.servo


def test_base_merge_overrides_single_fields():
    cfg = loads('base = "common-clock"\nseed = 9\n[link]\nloss_transmittance = 0.2\n')
    ref = load_preset("common-clock")
    assert cfg.seed == 9 and cfg.link.loss_transmittance == 0.2
    assert cfg.link.base_delay == ref.link.base_delay and cfg.ebs1 == ref.ebs1


@pytest.mark.parametrize("text, field", [
    ('base = "common-clock"\n[link]\nbase_dleay = 1\n', "link.base_dleay"),
    ('base = "common-clock"\n[detectors.d3]\nefficiency = 2.0\n', "detectors.d3"),
    ('base = "common-clock"\nseed = "x"\n', "seed"),
    ('base = "common-clock"\n[twtt]\nservo = 1\n', "twtt.servo"),
    ('base = "nope"\n', "base"),
    ('base = "common-clock"\n[qkd.optimization]\nD = [6.5]\n', "qkd.optimization.D"),
    ('base = "common-clock"\n[security.excess_noise]\nmodel = "magic"\n', "security.excess_noise.model"),
    ('base = "common-clock"\n[security.excess_noise]\nmodel = "none"\ngain = 2\n', "security.excess_noise"),
    ('base = "common-clock"\n[attack]\ntau_eve = -5\n', "attack"),
    ('[source.ebs1]\ncorrelation_sigma = 1\n', "source.ebs1.pair_rate"),
])
def test_errors_name_the_field(text, field):
    with pytest.raises(ConfigError) as e:
        loads(text)
    assert e.value.field == field
    assert field in str(e.value)


def test_syntax_error_and_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="line"):
        loads("seed = [\n\nname = 1", "bad.toml")
    with pytest.raises(ConfigError, match="cannot read"):
        load(tmp_path / "missing.toml")


def test_file_round_trip(tmp_path):
    p = tmp_path / "s.toml"
    p.write_text('base = "noiseless"\n[security.excess_noise]\nmodel = "none"\n')
    cfg = load(p)
    assert isinstance(cfg.security.excess_noise_model, NoLeakage)
    assert cfg.digest() == load(p).digest()
    assert cfg.digest() != load_preset("noiseless").digest()
