import json
from pathlib import Path

import numpy as np
import pytest
import yaml
from click.testing import CliRunner

from spatial_se.audio_io import read_wav, write_wav
from spatial_se.cli import main, parse_stage_range
from spatial_se.errors import ConfigError
from spatial_se.simulate.corpus import read_metadata
from spatial_se.stft import Waveform
from spatial_se.workspace import ManifestRow, read_manifest, write_manifest

from .conftest import modulated_noise

FS = 16000
UTTS = ("utt01", "utt02", "utt03")


@pytest.fixture(scope="module")
def toy_data(tmp_path_factory):
    """Three 1 s clean utterances plus point-noise and two diffuse banks."""
    root = tmp_path_factory.mktemp("toy")
    rng = np.random.default_rng(7)
    rows = []
    for utt in UTTS:
        p = write_wav(str(root / "clean" / f"{utt}.wav"), Waveform(modulated_noise(rng, 1.0), FS))
        rows.append(ManifestRow(utt, (p,)))
    write_manifest(str(root / "clean.tsv"), rows)
    for k in range(2):
        write_wav(str(root / "noise" / f"n{k}.wav"), Waveform(0.05 * rng.standard_normal(FS), FS))
    for bank in ("diffuse", "diffuse_alt"):
        write_wav(str(root / bank / "d0.wav"), Waveform(0.05 * rng.standard_normal(5 * FS), FS))
    return root


def _config(toy: Path, work: Path, name: str = "cfg.yaml", **sections) -> str:
    data = {
        "io": {"corpus_manifest": str(toy / "clean.tsv"), "work_dir": str(work), "seed": 5},
        "spatializer": {
            "noise_bank": str(toy / "noise"),
            "diffuse_bank": str(toy / "diffuse"),
            "max_order": 4,
            "scene": {"area": [12.0, 16.0], "t60": [0.15, 0.2], "noise_count": [1, 1]},
        },
        "enhancement": {"method": "mvdr_souden"},
        "scoring": {"metrics": ["pesq", "stoi", "si_snr", "si_snri"]},
        "loss_eval": [
            {"wrapper": "pit", "criterion": "si_snr", "weight": 1.0},
            {"wrapper": "fixed", "criterion": "mse_mask", "weight": 10.0},
        ],
    }
    for key, value in sections.items():
        data.setdefault(key, {}).update(value)
    p = work.parent / name
    p.write_text(yaml.safe_dump(data), encoding="utf-8")
    return str(p)


def _invoke(*args):
    return CliRunner().invoke(main, list(args))


def _snapshot(work: Path):
    return {str(p.relative_to(work)): p.read_bytes() for p in sorted(work.rglob("*")) if p.is_file()}


def _state(work: Path) -> dict:
    return json.loads((work / "run_state.json").read_text())["stages"]


@pytest.fixture(scope="module")
def full_run(toy_data, tmp_path_factory):
    work = tmp_path_factory.mktemp("run") / "work"
    cfg = _config(toy_data, work)
    result = _invoke("run", "--config", cfg, "--stage", "1-4")
    assert result.exit_code == 0, result.output
    return cfg, work


def test_parse_stage_range():
    assert parse_stage_range("3") == (3, 3)
    assert parse_stage_range("1-4") == (1, 4)
    assert parse_stage_range("2..3") == (2, 3)
    with pytest.raises(ConfigError):
        parse_stage_range("one")


def test_full_run_produces_every_artifact(full_run):
    _, work = full_run
    mixtures = read_manifest(str(work / "01_simulate" / "mixtures.tsv"))
    assert [r.utt_id for r in mixtures] == list(UTTS)
    assert all(len(r.paths) == 4 for r in mixtures)
    mix = read_wav(mixtures[0].paths[0])
    assert mix.num_channels == 4 and mix.num_samples == FS
    assert len(read_metadata(str(work / "01_simulate"))) == 3

    enhanced = read_manifest(str(work / "02_enhance" / "enhanced.tsv"))
    assert read_wav(enhanced[0].path).num_channels == 1

    table = (work / "03_score" / "enhanced.tsv").read_text().splitlines()
    assert table[0] == "utt_id\tpesq\tstoi\tsi_snr\tsi_snri"
    assert [ln.split("\t")[0] for ln in table[1:]] == [*UTTS, "mean"]
    assert (work / "03_score" / "unprocessed.tsv").is_file()
    loss = (work / "03_score" / "loss_eval.tsv").read_text().splitlines()
    assert loss[0] == "utt_id\ttotal\t1*pit:si_snr\t10*fixed:mse_mask"
    assert len(loss) == 4

    results = (work / "04_pack" / "results.tsv").read_text().splitlines()
    assert results[0] == "system\tpesq\tstoi\tsi_snr\tsi_snri"
    assert [ln.split("\t")[0] for ln in results[1:]] == ["No processing", "mvdr_souden"]
    assert "n/a" in (work / "04_pack" / "summary.txt").read_text()
    packed = yaml.safe_load((work / "04_pack" / "config.yaml").read_text())
    assert packed["io"]["seed"] == 5

    state = json.loads((work / "run_state.json").read_text())
    assert sorted(state["stages"]) == ["1", "2", "3", "4"]


def test_rerun_is_idempotent(full_run):
    cfg, work = full_run
    before = _snapshot(work)
    result = _invoke("run", "--config", cfg)
    assert result.exit_code == 0, result.output
    assert _snapshot(work) == before


def test_forced_single_stage_leaves_others(full_run):
    cfg, work = full_run
    before = _snapshot(work)
    result = _invoke("score", "--config", cfg, "--force")
    assert result.exit_code == 0, result.output
    after = _snapshot(work)
    for rel, data in before.items():
        if rel == "run_state.json":
            continue
        # score tables are recomputed from the same inputs
        assert after[rel] == data, rel
    stages = _state(work)
    assert stages["2"]["done"] and stages["3"]["done"]
    assert not stages["4"]["done"] and stages["4"]["stale"] == "stage 3 reran"

    result = _invoke("pack", "--config", cfg)
    assert result.exit_code == 0, result.output
    assert _state(work)["4"]["done"]
    for rel in ("04_pack/results.tsv", "04_pack/summary.txt"):
        assert (work / rel).read_bytes() == before[rel]


def test_changed_config_rebuilds_only_dependent_stages(toy_data, tmp_path):
    work = tmp_path / "work"
    cfg = _config(toy_data, work)
    assert _invoke("run", "--config", cfg).exit_code == 0
    simulated = _state(work)["1"]["finished_at"]

    cfg = _config(toy_data, work, name="mpdr.yaml", enhancement={"method": "mpdr_rtf"})
    result = _invoke("run", "--config", cfg)
    assert result.exit_code == 0, result.output
    assert _state(work)["1"]["finished_at"] == simulated
    results = (work / "04_pack" / "results.tsv").read_text().splitlines()
    assert [ln.split("\t")[0] for ln in results[1:]] == ["No processing", "mpdr_rtf"]
    packed = yaml.safe_load((work / "04_pack" / "config.yaml").read_text())
    assert packed["enhancement"]["method"] == "mpdr_rtf"

    # resimulating invalidates everything downstream until it reruns
    assert _invoke("simulate", "--config", cfg, "--force").exit_code == 0
    stages = _state(work)
    for s in ("2", "3", "4"):
        assert not stages[s]["done"] and stages[s]["stale"] == "stage 1 reran"
    result = _invoke("run", "--config", cfg)
    assert result.exit_code == 0, result.output
    stages = _state(work)
    assert all(stages[s]["done"] and "stale" not in stages[s] for s in ("1", "2", "3", "4"))


def test_runs_are_deterministic_across_job_counts(toy_data, full_run, tmp_path):
    _, work = full_run
    other = tmp_path / "work"
    cfg = _config(toy_data, other)
    result = _invoke("run", "--config", cfg, "--stage", "1-3", "--jobs", "2")
    assert result.exit_code == 0, result.output
    for rel in ("03_score/enhanced.tsv", "03_score/unprocessed.tsv"):
        assert (other / rel).read_text() == (work / rel).read_text()
    meta = [m["scene"] for m in read_metadata(str(other / "01_simulate"))]
    assert meta == [m["scene"] for m in read_metadata(str(work / "01_simulate"))]


def test_partial_outputs_exit_3(toy_data, tmp_path):
    work = tmp_path / "work"
    (work / "01_simulate").mkdir(parents=True)
    (work / "01_simulate" / "stray.wav").write_bytes(b"")
    cfg = _config(toy_data, work)
    assert _invoke("simulate", "--config", cfg).exit_code == 3


def test_missing_upstream_stage_exit_3(toy_data, tmp_path):
    cfg = _config(toy_data, tmp_path / "work")
    assert _invoke("run", "--config", cfg, "--stage", "2").exit_code == 3


def test_config_errors_exit_2(toy_data, tmp_path):
    cfg = _config(toy_data, tmp_path / "work", enhancement={"beamformer": {"muu": 2.0}})
    assert _invoke("run", "--config", cfg).exit_code == 2
    cfg = _config(toy_data, tmp_path / "work", name="ok.yaml")
    assert _invoke("run", "--config", cfg, "--stage", "4-1").exit_code == 2
    assert _invoke("run", "--config", str(tmp_path / "missing.yaml")).exit_code == 3


def test_simulate_count_and_alt_test(toy_data, tmp_path):
    work = tmp_path / "work"
    cfg = _config(toy_data, work, spatializer={"alt_diffuse_bank": str(toy_data / "diffuse_alt")})
    assert _invoke("simulate", "--config", cfg, "--count", "2").exit_code == 0
    main_meta = read_metadata(str(work / "01_simulate"))
    alt_meta = read_metadata(str(work / "01_simulate" / "alt_test"))
    assert len(main_meta) == len(alt_meta) == 2
    for a, b in zip(main_meta, alt_meta):
        assert a["scene"] == b["scene"]
        assert a["noise_clips"] == b["noise_clips"]
    # the alternate set renders again only on request
    result = _invoke("simulate", "--config", cfg, "--count", "2", "--alt-test")
    assert result.exit_code == 0, result.output


def test_auxiva_enhancement_writes_every_source(toy_data, tmp_path):
    work = tmp_path / "work"
    cfg = _config(toy_data, work, enhancement={"method": "auxiva_iss", "bss": {"n_iter": 5}})
    result = _invoke("run", "--config", cfg, "--stage", "1-2")
    assert result.exit_code == 0, result.output
    wav = work / "02_enhance" / "wav"
    for utt in UTTS:
        assert sorted(p.name for p in wav.glob(f"{utt}_src*.wav")) == [f"{utt}_src{k}.wav" for k in range(4)]
        enh = read_wav(str(wav / f"{utt}_enh.wav"))
        assert enh.num_channels == 1 and enh.num_samples == FS
