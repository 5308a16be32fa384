import pytest
import yaml

from spatial_se.config import (
    PipelineConfig, apply_env_overrides, config_hash, config_to_dict, dump_config, load_config,
    parse_config, section_hash,
)
from spatial_se.errors import ConfigError, MissingInputError
from spatial_se.losses import MtlSpec


def _write(tmp_path, data) -> str:
    p = tmp_path / "cfg.yaml"
    p.write_text(yaml.safe_dump(data), encoding="utf-8")
    return str(p)


def test_defaults():
    cfg = parse_config({})
    assert isinstance(cfg, PipelineConfig)
    assert cfg.enhancement.method == "mvdr_souden"
    assert list(cfg.stage_range()) == [1, 2, 3, 4]
    assert cfg.enhancement.stft.n_fft == 512
    assert cfg.loss_eval is None


def test_unknown_key_names_dotted_path():
    with pytest.raises(ConfigError) as e:
        parse_config({"enhancement": {"beamformer": {"muu": 1.0}}})
    assert e.value.key == "enhancement.beamformer.muu"
    assert e.value.exit_code == 2


@pytest.mark.parametrize("raw, key", [
    ({"stages": {"start": 3, "stop": 2}}, "stages"),
    ({"enhancement": {"method": "delay_and_sum"}}, "enhancement.method"),
    ({"enhancement": {"mask_source": "from_files"}}, "enhancement.mask_dir"),
    ({"enhancement": {"stft": {"sample_rate": 8000}}}, "enhancement.stft.sample_rate"),
    ({"scoring": {"metrics": ["mos"]}}, "scoring.metrics"),
    ({"scoring": {"reference": "dry"}}, "scoring.reference"),
    ({"io": {"seed": "zero"}}, "io.seed"),
    ({"enhancement": {"stft": {"n_fft": 512, "hop": 600}}}, "enhancement.stft"),
    ({"loss_eval": [{"wrapper": "pit", "criterion": "bogus"}]}, "loss_eval"),
    ({"spatializer": {"scene": {"t60": [0.6, 0.2]}}}, "spatializer.scene"),
])
def test_validation_errors(raw, key):
    with pytest.raises(ConfigError) as e:
        parse_config(raw)
    assert e.value.key.startswith(key)


def test_scientific_notation_strings_are_numbers():
    cfg = parse_config({"enhancement": {"beamformer": {"diag_loading": "1e-5"}}})
    assert cfg.enhancement.beamformer.diag_loading == pytest.approx(1e-5)


def test_env_overrides():
    raw = apply_env_overrides(
        {"enhancement": {"method": "mvdr_rtf"}},
        {"SPATIAL_SE__ENHANCEMENT__BEAMFORMER__MU": "0.5", "SPATIAL_SE__IO__SEED": "7", "OTHER": "x"},
    )
    cfg = parse_config(raw)
    assert cfg.enhancement.beamformer.mu == 0.5
    assert cfg.io.seed == 7
    assert cfg.enhancement.method == "mvdr_rtf"


def test_load_config_file_and_env(tmp_path):
    path = _write(tmp_path, {
        "io": {"seed": 3, "work_dir": str(tmp_path / "w")},
        "enhancement": {"method": "auxiva_iss", "bss": {"n_iter": 10}},
        "loss_eval": [{"wrapper": "pit", "criterion": "si_snr"}],
    })
    cfg = load_config(path, environ={"SPATIAL_SE__STAGES__STOP": "2"}, dotenv=False)
    assert cfg.io.seed == 3
    assert cfg.enhancement.bss.n_iter == 10
    assert cfg.stages.stop == 2
    assert isinstance(cfg.loss_eval, MtlSpec)
    with pytest.raises(MissingInputError):
        load_config(str(tmp_path / "nope.yaml"), environ={}, dotenv=False)


def test_normalized_round_trip_and_hash(tmp_path):
    cfg = parse_config({
        "spatializer": {"scene": {"noise_count": [1, 2]}},
        "loss_eval": [{"wrapper": "fixed", "criterion": "mse_mask", "weight": 10.0}],
    })
    again = parse_config(yaml.safe_load(dump_config(cfg)))
    assert config_to_dict(again) == config_to_dict(cfg)
    assert config_hash(again) == config_hash(cfg)
    assert config_hash(parse_config({"io": {"seed": 1}})) != config_hash(cfg)


def test_section_hash_follows_only_named_sections():
    base = parse_config({})
    moved = parse_config({"io": {"work_dir": "elsewhere"}, "stages": {"start": 2}})
    other_method = parse_config({"enhancement": {"method": "mpdr_rtf"}})
    upstream = ("io", "spatializer")
    assert section_hash(moved, upstream) == section_hash(base, upstream)
    assert section_hash(other_method, upstream) == section_hash(base, upstream)
    with_method = upstream + ("enhancement",)
    assert section_hash(other_method, with_method) != section_hash(base, with_method)
    assert section_hash(parse_config({"io": {"seed": 3}}), upstream) != section_hash(base, upstream)


def test_invalid_yaml(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("stages: [1, 2\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config(str(p), environ={}, dotenv=False)
