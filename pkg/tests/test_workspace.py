import json
import os

import numpy as np
import pytest

from spatial_se.audio_io import read_wav, write_wav
from spatial_se.errors import MissingInputError
from spatial_se.run_state import STATE_FILENAME, RunState, stage_outputs
from spatial_se.stft import Waveform
from spatial_se.workers import map_jobs
from spatial_se.workspace import ManifestRow, WavBank, Workspace, read_manifest, write_manifest


def _square(x: int) -> int:
    return x * x


def test_stage_dirs_and_resolve(tmp_path):
    ws = Workspace(str(tmp_path / "work"))
    d = ws.stage_dir(2, create=True)
    assert d.name == "02_enhance" and d.is_dir()
    with pytest.raises(PermissionError):
        ws.resolve("../outside")
    with pytest.raises(ValueError):
        ws.stage_dir(9)


def test_wav_bank_is_sorted_and_skips_hidden(tmp_path, rng):
    for name in ("b.wav", "a.wav", ".hidden.wav", "notes.txt"):
        p = tmp_path / name
        if name.endswith(".wav"):
            write_wav(str(p), Waveform(rng.standard_normal(100) * 0.1, 16000))
        else:
            p.write_text("x")
    bank = WavBank(str(tmp_path), 16000)
    assert bank.names == ["a.wav", "b.wav"]
    assert bank[0].num_samples == 100
    with pytest.raises(MissingInputError):
        WavBank(str(tmp_path / "empty"))


def test_wav_io(tmp_path, rng):
    x = Waveform(rng.standard_normal((50, 2)) * 0.1, 16000)
    p = write_wav(str(tmp_path / "x.wav"), x)
    back = read_wav(p, expected_rate=16000)
    np.testing.assert_allclose(back.samples, x.samples, atol=1e-7)
    with pytest.raises(ValueError, match="sample rate"):
        read_wav(p, expected_rate=8000)
    with pytest.raises(FileNotFoundError):
        read_wav(str(tmp_path / "none.wav"))
    with pytest.raises(ValueError):
        write_wav(str(tmp_path / "y.wav"), x, fmt="mp3")


def test_manifest_round_trip(tmp_path):
    rows = [ManifestRow("u2", (str(tmp_path / "w" / "u2.wav"),)), ManifestRow("u1", (str(tmp_path / "w" / "u1.wav"),))]
    p = write_manifest(str(tmp_path / "m.tsv"), rows)
    assert p.read_text().splitlines()[0] == "u1\tw/u1.wav"
    back = read_manifest(str(p))
    assert [r.utt_id for r in back] == ["u1", "u2"]
    assert back[0].path == str(tmp_path.resolve() / "w" / "u1.wav")


def test_manifest_errors(tmp_path):
    with pytest.raises(MissingInputError):
        read_manifest(str(tmp_path / "missing.tsv"))
    dup = tmp_path / "dup.tsv"
    dup.write_text("# comment\na\tx.wav\n\na\ty.wav\n")
    with pytest.raises(ValueError, match="duplicate"):
        read_manifest(str(dup))
    short = tmp_path / "short.tsv"
    short.write_text("a\n")
    with pytest.raises(ValueError, match="columns"):
        read_manifest(str(short))


def test_run_state_records_and_verifies(tmp_path):
    out = tmp_path / "01_simulate"
    out.mkdir()
    (out / "a.txt").write_text("one")
    (out / "mixtures.tsv").write_text("m")
    (out / "x.tmp").write_text("partial")
    outputs = stage_outputs(out)
    assert [os.path.basename(p) for p in outputs] == ["a.txt", "mixtures.tsv"]

    state = RunState(str(tmp_path))
    state.mark_done(1, "abc", 0, str(out / "mixtures.tsv"), outputs)
    again = RunState(str(tmp_path))
    assert again.is_done(1) and not again.is_done(2)
    rec = again.record(1)
    assert rec["manifest"] == "01_simulate/mixtures.tsv"
    assert set(rec["checksums"]) == {"01_simulate/a.txt", "01_simulate/mixtures.tsv"}
    assert again.verify(1) == []
    (out / "a.txt").write_text("two")
    assert again.verify(1) == ["01_simulate/a.txt"]
    again.invalidate([1])
    assert not RunState(str(tmp_path)).is_done(1)


def test_mark_stale_keeps_record_but_clears_done(tmp_path):
    state = RunState(str(tmp_path))
    for stage in (1, 2, 3):
        state.mark_done(stage, f"h{stage}", 0, str(tmp_path / STATE_FILENAME), [])
    assert state.mark_stale([2, 3, 4], "stage 1 reran") == [2, 3]
    again = RunState(str(tmp_path))
    assert again.is_done(1) and not again.is_stale(1)
    assert not again.is_done(2) and again.is_stale(3)
    assert again.record(2)["stale"] == "stage 1 reran"
    assert again.record(2)["config_hash"] == "h2"
    assert again.mark_stale([2], "again") == []
    again.mark_done(2, "h2b", 0, str(tmp_path / STATE_FILENAME), [])
    assert again.is_done(2) and "stale" not in again.record(2)


def test_corrupt_run_state_starts_fresh(tmp_path):
    (tmp_path / STATE_FILENAME).write_text("{not json")
    state = RunState(str(tmp_path))
    assert state.record(1) is None
    state.mark_done(4, "h", 1, str(tmp_path / STATE_FILENAME), [])
    assert json.loads((tmp_path / STATE_FILENAME).read_text())["stages"]["4"]["seed"] == 1


def test_map_jobs_keeps_order():
    assert map_jobs(_square, range(6), jobs=1) == [0, 1, 4, 9, 16, 25]
    assert map_jobs(_square, range(6), jobs=3) == [0, 1, 4, 9, 16, 25]
