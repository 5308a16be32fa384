"""
The staged recipe: 1 simulate, 2 enhance, 3 score, 4 pack.

Stages talk only through manifests under the work dir:
  01_simulate/mixtures.tsv   utt_id  mix  target  anechoic  noise
  02_enhance/enhanced.tsv    utt_id  enhanced
  03_score/{enhanced,unprocessed}.tsv (+ loss_eval.tsv)
  04_pack/results.tsv, summary.txt, config.yaml
"""
import os
import shutil
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from .audio_io import read_wav, write_wav
from .beamforming import (
    VARIANTS, BeamformerConfig, TFMask, apply_beamformer, compute_weights, estimate_psd,
    estimate_target_power, ideal_ratio_mask,
)
from .bss import auxiva_iss, projection_back
from .config import (
    METHODS, NUM_STAGES, BssSection, PipelineConfig, config_hash, dump_config, section_hash,
)
from .errors import ConfigError, MissingInputError, PartialOutputError
from .logging_utils import block, get_logger
from .losses import LossBatch, MtlSpec, mtl_combine, si_snr
from .metrics import EvalTable, evaluate_corpus, read_table, render_summary, systems_tsv, write_table
from .run_state import RunState, stage_outputs
from .simulate.corpus import MANIFEST_NAME, spatialize_corpus
from .stft import StftConfig, Waveform, istft, stft
from .workers import map_jobs
from .workspace import ManifestRow, Workspace, read_manifest, write_manifest

log = get_logger("stages")

ENHANCED_MANIFEST = "enhanced.tsv"
ALT_TEST_DIR = "alt_test"
ENHANCED_TABLE = "enhanced.tsv"
UNPROCESSED_TABLE = "unprocessed.tsv"
LOSS_TABLE = "loss_eval.tsv"
UNPROCESSED_LABEL = "No processing"
COL_MIX, COL_TARGET, COL_ANECHOIC, COL_NOISE = range(4)
WEIGHTED = ("wmpdr_rtf", "wmpdr_souden", "wpd_rtf", "wpd_souden")


def _require_stage_output(ws: Workspace, stage: int, name: str) -> str:
    p = ws.stage_dir(stage) / name
    if not p.is_file():
        raise MissingInputError(f"{p} not found; run stage {stage} first")
    return str(p)


# ---------- stage 1 ------------------------------------------------------------

def simulate_stage(cfg: PipelineConfig, ws: Workspace, jobs: int = 1, alt_test: bool = False) -> Path:
    sp = cfg.spatializer
    if not cfg.io.corpus_manifest:
        raise MissingInputError("io.corpus_manifest is not set")
    if not sp.noise_bank or not sp.diffuse_bank:
        raise MissingInputError("spatializer.noise_bank and spatializer.diffuse_bank are required")
    out = ws.stage_dir(1, create=True)
    if alt_test:
        if not sp.alt_diffuse_bank:
            raise ConfigError("spatializer.alt_diffuse_bank", "required for the alternate test set")
        return spatialize_corpus(
            cfg.io.corpus_manifest, sp.noise_bank, sp.alt_diffuse_bank, str(out / ALT_TEST_DIR),
            cfg.io.seed, sp.count, jobs, sp.scene, sp.sample_rate, sp.max_order,
        )
    manifest = spatialize_corpus(
        cfg.io.corpus_manifest, sp.noise_bank, sp.diffuse_bank, str(out),
        cfg.io.seed, sp.count, jobs, sp.scene, sp.sample_rate, sp.max_order,
    )
    if sp.alt_diffuse_bank:
        simulate_stage(cfg, ws, jobs, alt_test=True)
    return manifest


# ---------- stage 2 ------------------------------------------------------------

@dataclass(frozen=True)
class _EnhanceJob:
    utt_id: str
    mix_path: str
    target_path: Optional[str]
    noise_path: Optional[str]
    out_dir: str
    method: str
    sample_rate: int
    stft: StftConfig
    beamformer: BeamformerConfig
    bss: BssSection
    mask_source: str = "oracle_irm"
    mask_dir: Optional[str] = None


def enhanced_path(out_dir: str, utt_id: str, suffix: str = "enh") -> str:
    return os.path.join(out_dir, "wav", f"{utt_id}_{suffix}.wav")


def _component(job: _EnhanceJob, path: Optional[str], what: str) -> Waveform:
    if not path:
        raise MissingInputError(f"{job.utt_id}: {job.method} needs the oracle {what} component")
    return read_wav(path, expected_rate=job.sample_rate)


def _masks(job: _EnhanceJob, spec) -> Tuple[TFMask, TFMask]:
    ref = job.beamformer.ref_channel
    if job.mask_source == "from_files":
        p = os.path.join(job.mask_dir, f"{job.utt_id}.npy")
        if not os.path.isfile(p):
            raise MissingInputError(f"{job.utt_id}: mask file {p} not found")
        values = np.load(p)
        if values.shape != spec.data.shape[:2]:
            raise ValueError(f"{p}: mask shape {values.shape} != (frames, bins) {spec.data.shape[:2]}")
        speech = TFMask(values)
        return speech, speech.complement()
    target = stft(_component(job, job.target_path, "target"), job.stft)
    noise = stft(_component(job, job.noise_path, "noise"), job.stft)
    return ideal_ratio_mask(target, noise, ref), ideal_ratio_mask(noise, target, ref)


def _beamform(job: _EnhanceJob, mix: Waveform) -> Waveform:
    bf = job.beamformer
    spec = stft(mix, job.stft)
    speech_mask, noise_mask = _masks(job, spec)
    kwargs: Dict = {"observation": spec}
    if bf.variant != "mfmcwf":
        kwargs["psd_speech"] = estimate_psd(spec, speech_mask)
        kwargs["psd_noise"] = estimate_psd(spec, noise_mask)
    if bf.variant in WEIGHTED:
        kwargs["power"] = estimate_target_power(spec, speech_mask, bf.power_floor, bf.mask_floor)
    if bf.variant == "mfmcwf":
        target = stft(_component(job, job.target_path, "target"), job.stft)
        kwargs["target"] = target.channel(bf.ref_channel)
    weights = compute_weights(bf, **kwargs)
    return istft(apply_beamformer(weights, spec), job.stft, mix.num_samples)


def _separate(job: _EnhanceJob, mix: Waveform) -> List[str]:
    """AuxIVA-ISS; every source is written and the best one (vs the oracle target) becomes the enhanced output."""
    ref = job.beamformer.ref_channel
    cfg = StftConfig(n_fft=job.bss.n_fft, hop=job.bss.hop, sample_rate=job.sample_rate)
    spec = stft(mix, cfg)
    sources, _ = auxiva_iss(spec, job.bss.n_iter, job.bss.contrast_eps)
    waves = [istft(s, cfg, mix.num_samples) for s in projection_back(sources, spec, ref)]
    paths = [
        write_wav(enhanced_path(job.out_dir, job.utt_id, f"src{k}"), w, fmt="float")
        for k, w in enumerate(waves)
    ]
    best = 0
    if job.target_path:
        target = read_wav(job.target_path, expected_rate=job.sample_rate).channel(ref)
        scores = [si_snr(target, w.channel(0)) for w in waves]
        best = int(np.argmax(scores))
        log.debug(f"{job.utt_id}: source SI-SNRs {[round(s, 2) for s in scores]}, picked {best}")
    else:
        log.warning(f"{job.utt_id}: no oracle target; keeping separated source 0")
    shutil.copyfile(paths[best], enhanced_path(job.out_dir, job.utt_id))
    return paths


def _enhance_one(job: _EnhanceJob) -> ManifestRow:
    try:
        mix = read_wav(job.mix_path, expected_rate=job.sample_rate)
        ref = job.beamformer.ref_channel
        if ref >= mix.num_channels:
            raise ValueError(f"ref_channel {ref} out of range for {mix.num_channels} channels")
        out = enhanced_path(job.out_dir, job.utt_id)
        if job.method == "passthrough":
            write_wav(out, Waveform.from_mono(mix.channel(ref), mix.sample_rate), fmt="float")
        elif job.method == "auxiva_iss":
            _separate(job, mix)
        else:
            write_wav(out, _beamform(job, mix), fmt="float")
    except Exception:
        log.exception(f"enhancement failed for {job.utt_id}")
        raise
    return ManifestRow(job.utt_id, (out,))


def enhance_corpus(manifest: str, method: str, cfg: PipelineConfig, out_dir: str, jobs: int = 1) -> Path:
    """Enhance every mixture of `manifest` with `method`; returns the enhanced manifest."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {list(METHODS)}")
    enh = cfg.enhancement
    rows = read_manifest(manifest)
    bf = enh.beamformer.to_config(method if method in VARIANTS else "mvdr_souden")
    work = []
    for row in rows:
        paths = row.paths
        work.append(_EnhanceJob(
            utt_id=row.utt_id,
            mix_path=paths[COL_MIX],
            target_path=paths[COL_TARGET] if len(paths) > COL_TARGET else None,
            noise_path=paths[COL_NOISE] if len(paths) > COL_NOISE else None,
            out_dir=os.path.abspath(out_dir),
            method=method,
            sample_rate=cfg.spatializer.sample_rate,
            stft=enh.stft,
            beamformer=bf,
            bss=enh.bss,
            mask_source=enh.mask_source,
            mask_dir=os.path.abspath(enh.mask_dir) if enh.mask_dir else None,
        ))
    results = map_jobs(_enhance_one, work, jobs)
    out = write_manifest(os.path.join(out_dir, ENHANCED_MANIFEST), results)
    log.info("\n" + block("ENHANCED", method=method, utterances=len(results), manifest=out))
    return out


def enhance_stage(cfg: PipelineConfig, ws: Workspace, jobs: int = 1) -> Path:
    manifest = _require_stage_output(ws, 1, MANIFEST_NAME)
    out = ws.stage_dir(2, create=True)
    return enhance_corpus(manifest, cfg.enhancement.method, cfg, str(out), jobs)


# ---------- stage 3 ------------------------------------------------------------

@dataclass(frozen=True)
class _LossJob:
    utt_id: str
    ref_path: str
    est_path: str
    mix_path: str
    noise_path: Optional[str]
    ref_channel: int
    stft: StftConfig
    spec: MtlSpec


def _loss_one(job: _LossJob) -> Tuple[str, float, List[float]]:
    ref_w = read_wav(job.ref_path)
    fs = ref_w.sample_rate
    ch = job.ref_channel if ref_w.num_channels > 1 else 0
    ref = Waveform.from_mono(ref_w.channel(ch), fs)
    est = Waveform.from_mono(read_wav(job.est_path, expected_rate=fs).channel(0), fs)
    mix = Waveform.from_mono(read_wav(job.mix_path, expected_rate=fs).channel(job.ref_channel), fs)
    ref_spec, est_spec, mix_spec = (stft(w, job.stft) for w in (ref, est, mix))
    ref_masks = est_masks = None
    if job.noise_path:
        noise = read_wav(job.noise_path, expected_rate=fs)
        noise_spec = stft(Waveform.from_mono(noise.channel(job.ref_channel), fs), job.stft)
        ref_masks = [ideal_ratio_mask(ref_spec, noise_spec)]
        # mask implied by the estimate relative to the mixture
        implied = np.abs(est_spec.data[:, :, 0]) / np.maximum(np.abs(mix_spec.data[:, :, 0]), 1e-8)
        est_masks = [TFMask(np.clip(implied, 0.0, 1.0))]
    batch = LossBatch(
        refs=[ref.channel(0)], ests=[est.channel(0)],
        ref_specs=[ref_spec], est_specs=[est_spec],
        ref_masks=ref_masks, est_masks=est_masks,
        mixtures=[mix.channel(0)],
    )
    result = mtl_combine(job.spec, batch)
    return job.utt_id, result.total, [r.value for _, _, r in result.breakdown]


def loss_eval_table(mixtures: str, enhanced: str, cfg: PipelineConfig, jobs: int = 1) -> str:
    """Offline objective scores of the enhanced outputs as TSV (lower is better)."""
    spec = cfg.loss_eval
    mix_rows = {r.utt_id: r for r in read_manifest(mixtures)}
    ref_col = COL_TARGET if cfg.scoring.reference == "reverberant" else COL_ANECHOIC
    work = []
    for row in read_manifest(enhanced):
        if row.utt_id not in mix_rows:
            raise ValueError(f"{row.utt_id} has no simulated mixture")
        paths = mix_rows[row.utt_id].paths
        work.append(_LossJob(
            row.utt_id, paths[ref_col], row.path, paths[COL_MIX],
            paths[COL_NOISE] if len(paths) > COL_NOISE else None,
            cfg.scoring.ref_channel, cfg.enhancement.stft, spec,
        ))
    labels = [f"{e.weight:g}*{e.label}" for e in spec.entries]
    lines = ["\t".join(["utt_id", "total", *labels])]
    for utt, total, parts in sorted(map_jobs(_loss_one, work, jobs)):
        lines.append("\t".join([utt, f"{total:.4f}", *(f"{v:.4f}" for v in parts)]))
    return "\n".join(lines) + "\n"


def score_stage(cfg: PipelineConfig, ws: Workspace, jobs: int = 1) -> Path:
    mixtures = _require_stage_output(ws, 1, MANIFEST_NAME)
    enhanced = _require_stage_output(ws, 2, ENHANCED_MANIFEST)
    out = ws.stage_dir(3, create=True)
    sc = cfg.scoring
    ref_col = COL_TARGET if sc.reference == "reverberant" else COL_ANECHOIC
    common = dict(
        ref_manifest=mixtures, mixture_manifest=mixtures, metrics=sc.metrics,
        ref_column=ref_col, mixture_column=COL_MIX, ref_channel=sc.ref_channel, jobs=jobs,
    )
    if "si_snri" not in sc.metrics:
        common["mixture_manifest"] = None
    enhanced_table = evaluate_corpus(est_manifest=enhanced, est_column=0, est_channel=0, **common)
    unprocessed = evaluate_corpus(
        est_manifest=mixtures, est_column=COL_MIX, est_channel=sc.ref_channel, **common
    )
    path = write_table(enhanced_table, str(out / ENHANCED_TABLE))
    write_table(unprocessed, str(out / UNPROCESSED_TABLE))
    if cfg.loss_eval is not None:
        p = out / LOSS_TABLE
        tmp = p.with_suffix(".tsv.tmp")
        tmp.write_text(loss_eval_table(mixtures, enhanced, cfg, jobs), encoding="utf-8")
        os.replace(tmp, p)
    return path


# ---------- stage 4 ------------------------------------------------------------

def pack_stage(cfg: PipelineConfig, ws: Workspace, jobs: int = 1) -> Path:
    enhanced = read_table(_require_stage_output(ws, 3, ENHANCED_TABLE))
    unprocessed = read_table(_require_stage_output(ws, 3, UNPROCESSED_TABLE))
    tables: Dict[str, EvalTable] = {UNPROCESSED_LABEL: unprocessed, cfg.enhancement.method: enhanced}
    out = ws.stage_dir(4, create=True)
    results = out / "results.tsv"
    results.write_text(systems_tsv(tables), encoding="utf-8")
    summary = render_summary(tables)
    (out / "summary.txt").write_text(summary, encoding="utf-8")
    (out / "config.yaml").write_text(dump_config(cfg), encoding="utf-8")
    log.info("\n" + summary)
    return results


STAGES: Dict[int, Callable[[PipelineConfig, Workspace, int], Path]] = {
    1: simulate_stage,
    2: enhance_stage,
    3: score_stage,
    4: pack_stage,
}

# config sections each stage depends on, upstream ones included
STAGE_SECTIONS: Dict[int, Tuple[str, ...]] = {
    1: ("io", "spatializer"),
    2: ("io", "spatializer", "enhancement"),
    3: ("io", "spatializer", "enhancement", "scoring", "loss_eval"),
    4: ("io", "spatializer", "enhancement", "scoring", "loss_eval"),
}


# ---------- runner -------------------------------------------------------------

def stage_hash(cfg: PipelineConfig, stage: int) -> str:
    return section_hash(cfg, STAGE_SECTIONS[stage])


def _stale_reason(state: RunState, stage: int, digest: str) -> Optional[str]:
    """Why a recorded stage must be rebuilt, or None when its record still holds."""
    rec = state.record(stage)
    if not rec:
        return None
    if rec.get("stale"):
        return str(rec["stale"])
    if rec.get("config_hash") != digest:
        return f"config changed since it ran ({str(rec.get('config_hash'))[:12]} -> {digest[:12]})"
    return None


def run(cfg: PipelineConfig, force: bool = False, jobs: int = 1) -> Dict[int, str]:
    """
    Execute the configured stage range in order. A stage is skipped when its
    record is done and was made under the same stage config; a stale or
    mismatched record is rebuilt. A stage directory holding files without any
    record is a PartialOutputError. Every stage that runs marks the records after
    it stale. Returns {stage: "ran" | "skipped"}.
    """
    ws = Workspace(cfg.io.work_dir)
    state = RunState(ws.root)
    status: Dict[int, str] = {}
    log.info("\n" + block(
        "RUN",
        work_dir=ws.root,
        stages=f"{cfg.stages.start}..{cfg.stages.stop}",
        method=cfg.enhancement.method,
        seed=cfg.io.seed,
        config=config_hash(cfg)[:12],
    ))
    for stage in cfg.stage_range():
        out = ws.stage_dir(stage)
        digest = stage_hash(cfg, stage)
        reason = _stale_reason(state, stage, digest)
        if state.is_done(stage) and reason is None and not force:
            changed = state.verify(stage)
            if changed:
                log.warning(f"stage {stage}: {len(changed)} recorded outputs changed since it ran")
            log.info("\n" + block("SKIP", stage=stage, reason="already complete"))
            status[stage] = "skipped"
            continue
        if stage_outputs(out):
            if reason is not None:
                log.warning("\n" + block("REBUILD", stage=stage, reason=reason))
            elif not force:
                raise PartialOutputError(
                    f"{out} holds outputs but no completion record; pass --force to rebuild stage {stage}"
                )
            shutil.rmtree(out)
        state.invalidate([stage])
        log.info("\n" + block("STAGE", stage=stage, dir=out))
        manifest = STAGES[stage](cfg, ws, jobs)
        state.mark_done(stage, digest, cfg.io.seed, str(manifest), stage_outputs(out))
        stale = state.mark_stale(range(stage + 1, NUM_STAGES + 1), f"stage {stage} reran")
        if stale:
            log.info("\n" + block("STALE", stages=", ".join(map(str, stale)), cause=f"stage {stage}"))
        status[stage] = "ran"
    return status
