import numpy as np
import pytest
from scipy.stats import spearmanr

from spatial_se.audio_io import write_wav
from spatial_se.losses import si_snr
from spatial_se.metrics import (
    EvalTable, MetricRow, evaluate_corpus, read_table, render_summary, stoi, systems_tsv, write_table,
)
from spatial_se.workspace import ManifestRow, write_manifest

from .conftest import modulated_noise, mono

FS = 16000


def test_stoi_self_score_is_one(rng):
    x = modulated_noise(rng, 3.0)
    assert stoi(x, x, FS) == pytest.approx(1.0, abs=1e-3)


def test_stoi_decreases_with_noise(rng):
    sigmas = [0.01, 0.05, 0.2, 1.0]
    means = []
    for sigma in sigmas:
        scores = []
        for _ in range(20):
            x = modulated_noise(rng, 2.0)
            scores.append(stoi(x, x + sigma * 0.1 * rng.standard_normal(x.size), FS))
        means.append(np.mean(scores))
    assert all(a >= b for a, b in zip(means, means[1:]))


@pytest.mark.slow
def test_stoi_noise_sweep_ranks_inversely(rng):
    x = modulated_noise(rng, 3.0)
    noise = rng.standard_normal(x.size)
    noise *= np.sqrt(np.mean(x ** 2) / np.mean(noise ** 2))
    sigmas = 10 ** (-np.linspace(20.0, -10.0, 20) / 20.0)
    scores = [stoi(x, x + s * noise, FS) for s in sigmas]
    rho, _ = spearmanr(sigmas, scores)
    assert rho <= -0.95


def test_stoi_preconditions(rng):
    x = modulated_noise(rng, 1.0)
    with pytest.raises(ValueError, match="length mismatch"):
        stoi(x, x[:-1], FS)
    with pytest.raises(ValueError, match="too short"):
        stoi(x[:2000], x[:2000], FS)
    with pytest.raises(ValueError):
        stoi(x, x, 8000)


def _corpus(tmp_path, rng, ids=("b", "a")):
    refs, ests, mixes, truth = [], [], [], {}
    for utt in ids:
        s = modulated_noise(rng, 2.0)
        est = s + 0.01 * rng.standard_normal(s.size)
        mix = np.stack([s + 0.05 * rng.standard_normal(s.size), s], axis=1)
        refs.append(ManifestRow(utt, (write_wav(str(tmp_path / f"{utt}_ref.wav"), mono(s)),)))
        ests.append(ManifestRow(utt, (write_wav(str(tmp_path / f"{utt}_est.wav"), mono(est)),)))
        mixes.append(ManifestRow(utt, (write_wav(str(tmp_path / f"{utt}_mix.wav"), mono(mix[:, 0])),)))
        truth[utt] = (s, est, mix[:, 0])
    paths = [
        str(write_manifest(str(tmp_path / f"{name}.tsv"), rows))
        for name, rows in (("ref", refs), ("est", ests), ("mix", mixes))
    ]
    return paths, truth


def test_evaluate_corpus_rows_and_values(tmp_path, rng):
    (ref, est, mix), truth = _corpus(tmp_path, rng)
    table = evaluate_corpus(ref, est, mix, metrics=["pesq", "stoi", "si_snr", "si_snri"])
    assert [r.utt_id for r in table.rows] == ["a", "b"]
    assert table.scored == ["stoi", "si_snr", "si_snri"]
    s, e, m = (x.astype(np.float32).astype(np.float64) for x in truth["a"])
    row = table.rows[0]
    assert row.values["si_snr"] == pytest.approx(si_snr(s, e), abs=1e-6)
    assert row.values["si_snri"] == pytest.approx(si_snr(s, e) - si_snr(s, m), abs=1e-6)
    tsv = table.to_tsv().splitlines()
    assert tsv[0] == "utt_id\tpesq\tstoi\tsi_snr\tsi_snri"
    assert tsv[1].split("\t")[1] == "n/a"
    assert tsv[-1].startswith("mean\t")


def test_evaluate_corpus_requires_aligned_manifests(tmp_path, rng):
    (ref, est, mix), _ = _corpus(tmp_path, rng)
    short = write_manifest(str(tmp_path / "short.tsv"), [ManifestRow("a", (str(tmp_path / "a_est.wav"),))])
    with pytest.raises(ValueError, match="'b'"):
        evaluate_corpus(ref, str(short), mix)
    with pytest.raises(ValueError, match="mixture manifest"):
        evaluate_corpus(ref, est, None, metrics=["si_snri"])
    with pytest.raises(ValueError, match="unknown metrics"):
        evaluate_corpus(ref, est, mix, metrics=["mos"])


def test_table_round_trip(tmp_path, rng):
    (ref, est, mix), _ = _corpus(tmp_path, rng)
    table = evaluate_corpus(ref, est, mix, metrics=["pesq", "si_snr", "si_snri"])
    back = read_table(str(write_table(table, str(tmp_path / "out" / "scores.tsv"))))
    assert back.metrics == table.metrics
    assert [r.utt_id for r in back.rows] == ["a", "b"]
    for a, b in zip(back.rows, table.rows):
        for m in ("si_snr", "si_snri"):
            assert a.values[m] == pytest.approx(b.values[m], abs=1e-4)
    with pytest.raises(FileNotFoundError):
        read_table(str(tmp_path / "missing.tsv"))


def test_summary_and_systems_table():
    base = EvalTable(["pesq", "si_snr"], [MetricRow("a", {"si_snr": 1.0}), MetricRow("b", {"si_snr": 3.0})])
    enh = EvalTable(["pesq", "si_snr"], [MetricRow("a", {"si_snr": 9.0}), MetricRow("b", {"si_snr": 11.0})])
    tables = {"No processing": base, "mvdr_souden": enh}
    text = render_summary(tables)
    assert "No processing" in text and "mvdr_souden" in text
    assert "n/a" in text and "10.00" in text
    lines = systems_tsv(tables).splitlines()
    assert lines[0] == "system\tpesq\tsi_snr"
    assert lines[2] == "mvdr_souden\tn/a\t10.0000"


def test_metric_rows_reject_non_finite():
    with pytest.raises(ValueError, match="non-finite"):
        MetricRow("a", {"si_snr": float("nan")})
    with pytest.raises(ValueError):
        EvalTable(["si_snr"]).mean()
