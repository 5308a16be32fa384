"""
Corpus scoring: per-utterance metric rows, an aggregate mean row, a TSV table
and a rich-rendered summary laid out as systems x metrics.
"""
import io
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from rich.console import Console
from rich.table import Table

from ..audio_io import read_wav
from ..logging_utils import block, get_logger
from ..losses.criteria import ci_sdr, si_snr, snr
from ..workers import map_jobs
from ..workspace import ManifestRow, read_manifest
from .intelligibility import stoi

log = get_logger("metrics.evaluate")

MEAN_ID = "mean"
NOT_AVAILABLE = "n/a"
UNAVAILABLE_METRICS = ("pesq",)


def si_snr_improvement(mixture_ref, est, ref) -> float:
    return si_snr(ref, est) - si_snr(ref, mixture_ref)


# metric(ref, est, mix, fs) -> value
METRICS: Dict[str, Callable] = {
    "stoi": lambda ref, est, mix, fs: stoi(ref, est, fs),
    "si_snr": lambda ref, est, mix, fs: si_snr(ref, est),
    "si_snri": lambda ref, est, mix, fs: si_snr_improvement(mix, est, ref),
    "ci_sdr": lambda ref, est, mix, fs: ci_sdr(ref, est),
    "snr": lambda ref, est, mix, fs: snr(ref, est),
}
NEEDS_MIXTURE = ("si_snri",)
METRIC_LABELS = {
    "pesq": "PESQ", "stoi": "STOI", "si_snr": "SI-SNR (dB)", "si_snri": "SI-SNRi (dB)",
    "ci_sdr": "CI-SDR (dB)", "snr": "SNR (dB)",
}


def validate_metrics(metrics: Sequence[str]) -> List[str]:
    known = set(METRICS) | set(UNAVAILABLE_METRICS)
    bad = [m for m in metrics if m not in known]
    if bad:
        raise ValueError(f"unknown metrics {bad}; expected a subset of {sorted(known)}")
    if not metrics:
        raise ValueError("at least one metric is required")
    return list(metrics)


@dataclass(frozen=True)
class MetricRow:
    utt_id: str
    values: Mapping[str, float]

    def __post_init__(self):
        for k, v in self.values.items():
            if not np.isfinite(v):
                raise ValueError(f"{self.utt_id}: non-finite {k} = {v}")


@dataclass
class EvalTable:
    metrics: List[str]
    rows: List[MetricRow] = field(default_factory=list)

    @property
    def scored(self) -> List[str]:
        return [m for m in self.metrics if m in METRICS]

    def mean(self) -> MetricRow:
        if not self.rows:
            raise ValueError("no rows to aggregate")
        return MetricRow(MEAN_ID, {
            m: float(np.mean([r.values[m] for r in self.rows])) for m in self.scored
        })

    def cell(self, row: MetricRow, metric: str) -> str:
        if metric in UNAVAILABLE_METRICS:
            return NOT_AVAILABLE
        return f"{row.values[metric]:.4f}"

    def to_tsv(self) -> str:
        lines = ["\t".join(["utt_id", *self.metrics])]
        for row in [*self.rows, self.mean()]:
            lines.append("\t".join([row.utt_id, *(self.cell(row, m) for m in self.metrics)]))
        return "\n".join(lines) + "\n"


def _align(named: Mapping[str, Sequence[ManifestRow]]) -> List[str]:
    """Sorted common ids; any id not present in every manifest is an error naming it."""
    sets = {name: {r.utt_id for r in rows} for name, rows in named.items()}
    union = set().union(*sets.values())
    problems = []
    for name, ids in sets.items():
        missing = sorted(union - ids)
        if missing:
            problems.append(f"{name} is missing {missing}")
    if problems:
        raise ValueError("manifests are not aligned: " + "; ".join(problems))
    return sorted(union)


def _channel(wave, ch: int) -> np.ndarray:
    if wave.num_channels == 1:
        return wave.channel(0)
    if ch >= wave.num_channels:
        raise ValueError(f"reference channel {ch} out of range for {wave.num_channels} channels")
    return wave.channel(ch)


@dataclass(frozen=True)
class _ScoreJob:
    utt_id: str
    ref_path: str
    est_path: str
    mix_path: Optional[str]
    metrics: Tuple[str, ...]
    ref_channel: int
    est_channel: int = 0


def _score_one(job: _ScoreJob) -> MetricRow:
    ref_w = read_wav(job.ref_path)
    est_w = read_wav(job.est_path, expected_rate=ref_w.sample_rate)
    ref = _channel(ref_w, job.ref_channel)
    est = _channel(est_w, job.est_channel)
    mix = None
    if job.mix_path is not None:
        mix = _channel(read_wav(job.mix_path, expected_rate=ref_w.sample_rate), job.ref_channel)
    if est.shape != ref.shape:
        raise ValueError(f"{job.utt_id}: estimate has {est.size} samples, reference {ref.size}")
    values = {m: float(METRICS[m](ref, est, mix, ref_w.sample_rate)) for m in job.metrics}
    return MetricRow(job.utt_id, values)


def evaluate_corpus(
    ref_manifest: str,
    est_manifest: str,
    mixture_manifest: Optional[str] = None,
    metrics: Sequence[str] = ("stoi", "si_snr", "si_snri"),
    ref_column: int = 0,
    est_column: int = 0,
    mixture_column: int = 0,
    ref_channel: int = 0,
    est_channel: int = 0,
    jobs: int = 1,
) -> EvalTable:
    """
    Score every utterance of `est_manifest` against `ref_manifest` (column
    `ref_column`, channel `ref_channel`). Multichannel estimates are read at
    `est_channel`; scoring the mixture itself gives the unprocessed row. Rows are
    sorted by utterance id.
    """
    metrics = validate_metrics(list(metrics))
    scored = tuple(m for m in metrics if m in METRICS)
    if any(m in NEEDS_MIXTURE for m in scored) and mixture_manifest is None:
        raise ValueError(f"metrics {[m for m in scored if m in NEEDS_MIXTURE]} need a mixture manifest")

    refs = read_manifest(ref_manifest)
    ests = read_manifest(est_manifest)
    named = {"reference": refs, "estimate": ests}
    mixes = None
    if mixture_manifest is not None:
        mixes = read_manifest(mixture_manifest)
        named["mixture"] = mixes
    ids = _align(named)

    def col(rows, c):
        idx = {r.utt_id: r for r in rows}
        out = {}
        for utt in ids:
            paths = idx[utt].paths
            if c >= len(paths):
                raise ValueError(f"{utt}: manifest has no column {c + 1}")
            out[utt] = paths[c]
        return out

    ref_p, est_p = col(refs, ref_column), col(ests, est_column)
    mix_p = col(mixes, mixture_column) if mixes is not None else {}
    work = [
        _ScoreJob(u, ref_p[u], est_p[u], mix_p.get(u), scored, ref_channel, est_channel) for u in ids
    ]
    table = EvalTable(metrics, map_jobs(_score_one, work, jobs))
    mean = table.mean()
    log.info("\n" + block(
        "SCORED",
        utterances=len(table.rows),
        **{m: f"{v:.4f}" for m, v in mean.values.items()},
    ))
    return table


def write_table(table: EvalTable, path: str) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    tmp = p.with_suffix(p.suffix + ".tmp")
    tmp.write_text(table.to_tsv(), encoding="utf-8")
    os.replace(tmp, p)
    return p


def read_table(path: str) -> EvalTable:
    """Inverse of write_table; the stored mean row is dropped and recomputed on demand."""
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"score table not found: {p}")
    lines = [ln for ln in p.read_text(encoding="utf-8").splitlines() if ln.strip()]
    if not lines:
        raise ValueError(f"{p}: empty score table")
    header = lines[0].split("\t")
    if header[0] != "utt_id":
        raise ValueError(f"{p}: unexpected header {header[:1]}")
    metrics = validate_metrics(header[1:])
    rows = []
    for line in lines[1:]:
        cols = line.split("\t")
        if cols[0] == MEAN_ID:
            continue
        if len(cols) != len(header):
            raise ValueError(f"{p}: row {cols[0]!r} has {len(cols)} columns, expected {len(header)}")
        values = {m: float(c) for m, c in zip(metrics, cols[1:]) if m in METRICS}
        rows.append(MetricRow(cols[0], values))
    return EvalTable(metrics, rows)


def systems_tsv(tables: Mapping[str, EvalTable]) -> str:
    """One line per system with its mean over utterances."""
    metrics: List[str] = []
    for t in tables.values():
        metrics += [m for m in t.metrics if m not in metrics]
    lines = ["\t".join(["system", *metrics])]
    for name, t in tables.items():
        mean = t.mean()
        lines.append("\t".join([name, *(
            NOT_AVAILABLE if m not in mean.values else f"{mean.values[m]:.4f}" for m in metrics
        )]))
    return "\n".join(lines) + "\n"


def summary_table(tables: Mapping[str, EvalTable], title: str = "Speech enhancement results") -> Table:
    """Rich table: one row per system (mean over utterances), one column per metric."""
    metrics: List[str] = []
    for t in tables.values():
        metrics += [m for m in t.metrics if m not in metrics]
    out = Table(title=title)
    out.add_column("System")
    for m in metrics:
        out.add_column(METRIC_LABELS.get(m, m), justify="right")
    for name, t in tables.items():
        mean = t.mean()
        cells = []
        for m in metrics:
            if m in UNAVAILABLE_METRICS or m not in mean.values:
                cells.append(NOT_AVAILABLE)
            else:
                cells.append(f"{mean.values[m]:.2f}" if m != "stoi" else f"{mean.values[m]:.3f}")
        out.add_row(name, *cells)
    return out


def render_summary(tables: Mapping[str, EvalTable], title: str = "Speech enhancement results") -> str:
    console = Console(record=True, width=100, file=io.StringIO(), color_system=None)
    console.print(summary_table(tables, title))
    return console.export_text()
