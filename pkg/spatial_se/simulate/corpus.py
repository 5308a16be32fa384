"""
Corpus spatialization: one MixtureRecord per manifest utterance, written as
32-bit float WAVs plus a JSON-lines metadata sidecar and an output manifest
"utt_id  mix  target  anechoic  noise".
"""
import json
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from ..audio_io import read_wav, write_wav
from ..logging_utils import block, get_logger
from ..workers import map_jobs
from ..workspace import ManifestRow, WavBank, read_manifest, write_manifest
from .mixer import build_mixture
from .scene import SceneConstraints, sample_scene, utterance_seed

log = get_logger("simulate.corpus")

MANIFEST_NAME = "mixtures.tsv"
METADATA_NAME = "metadata.jsonl"
COMPONENTS = ("mix", "target", "anechoic", "noise")
DIFFUSE_PICK_STREAM = 3


@dataclass(frozen=True)
class SpatializeJob:
    index: int
    utt_id: str
    path: str
    seed: int
    noise_dir: str
    diffuse_dir: str
    out_dir: str
    sample_rate: int
    constraints: SceneConstraints
    max_order: Optional[int] = None


def component_path(out_dir: str, utt_id: str, component: str) -> str:
    return os.path.join(out_dir, "wav", f"{utt_id}_{component}.wav")


def _render_one(job: SpatializeJob) -> Tuple[ManifestRow, dict]:
    utt = read_wav(job.path, expected_rate=job.sample_rate)
    if utt.num_channels != 1:
        raise ValueError(f"{job.path}: clean utterances must be mono, got {utt.num_channels} channels")
    scene = sample_scene(job.seed, job.constraints, job.sample_rate, job.max_order)
    noises = WavBank(job.noise_dir, job.sample_rate)
    diffuse_bank = WavBank(job.diffuse_dir, job.sample_rate)
    pick = int(np.random.default_rng([job.seed, DIFFUSE_PICK_STREAM]).integers(len(diffuse_bank)))

    rec = build_mixture(utt, scene, noises, diffuse_bank[pick], job.utt_id, max_order=job.max_order)
    waves = {
        "mix": rec.mixture,
        "target": rec.target_reverberant,
        "anechoic": rec.target_anechoic,
        "noise": rec.noise_sum,
    }
    paths = tuple(
        write_wav(component_path(job.out_dir, job.utt_id, name), waves[name], fmt="float")
        for name in COMPONENTS
    )
    meta = {
        "utt_id": job.utt_id,
        "index": job.index,
        "source": job.path,
        "seed": job.seed,
        "scene": scene.to_dict(),
        "noise_clips": rec.noise_clips,
        "diffuse_clip": diffuse_bank.names[pick],
        "measured_t60": None if math.isnan(rec.measured_t60) else round(rec.measured_t60, 6),
        "num_samples": utt.num_samples,
        "sample_rate": job.sample_rate,
    }
    log.info("\n" + block(
        "SPATIALIZED",
        utt=job.utt_id,
        room=" x ".join(f"{d:.2f}" for d in scene.room.dims),
        t60=f"{scene.room.t60:.3f} (measured {rec.measured_t60:.3f})",
        noises=scene.num_noises,
    ))
    return ManifestRow(job.utt_id, paths), meta


def spatialize_corpus(
    manifest_in: str,
    noise_dir: str,
    diffuse_dir: str,
    out_dir: str,
    seed: int,
    count: Optional[int] = None,
    jobs: int = 1,
    constraints: Optional[SceneConstraints] = None,
    sample_rate: int = 16000,
    max_order: Optional[int] = None,
) -> Path:
    """
    Render the first `count` utterances of `manifest_in`. Each utterance owns the
    stream utterance_seed(seed, index), so results do not depend on `jobs`.
    Pointing `diffuse_dir` at another bank (the alternate test set) changes only
    the diffuse components.
    """
    rows = read_manifest(manifest_in)
    if count is not None:
        if count < 0 or count > len(rows):
            raise ValueError(f"count {count} outside [0, {len(rows)}] for {manifest_in}")
        rows = rows[:count]
    # fail early on empty banks
    WavBank(noise_dir, sample_rate)
    WavBank(diffuse_dir, sample_rate)

    out = os.path.abspath(out_dir)
    os.makedirs(out, exist_ok=True)
    work: List[SpatializeJob] = [
        SpatializeJob(
            index=i,
            utt_id=row.utt_id,
            path=row.path,
            seed=utterance_seed(seed, i),
            noise_dir=os.path.abspath(noise_dir),
            diffuse_dir=os.path.abspath(diffuse_dir),
            out_dir=out,
            sample_rate=sample_rate,
            constraints=constraints or SceneConstraints(),
            max_order=max_order,
        )
        for i, row in enumerate(rows)
    ]
    results = map_jobs(_render_one, work, jobs)

    manifest = write_manifest(os.path.join(out, MANIFEST_NAME), [r for r, _ in results])
    meta_path = Path(out) / METADATA_NAME
    lines = [json.dumps(m, sort_keys=True) for _, m in sorted(results, key=lambda x: x[0].utt_id)]
    tmp = meta_path.with_suffix(".jsonl.tmp")
    tmp.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
    os.replace(tmp, meta_path)

    log.info("\n" + block("CORPUS SPATIALIZED", utterances=len(results), out=out, seed=seed))
    return manifest


def read_metadata(out_dir: str) -> List[dict]:
    p = Path(out_dir) / METADATA_NAME
    return [json.loads(line) for line in p.read_text(encoding="utf-8").splitlines() if line.strip()]
