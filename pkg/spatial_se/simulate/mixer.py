"""
Render one noisy reverberant 4-channel mixture from a clean utterance and a scene.

Random streams per utterance (all derived from scene.rng_seed):
  [seed, 1]  point-noise clip choice and crop / loop offsets
  [seed, 2]  diffuse segment offset
so swapping the diffuse bank leaves every point-noise component untouched.
"""
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy.signal import fftconvolve

from ..logging_utils import block, get_logger
from ..stft import Waveform
from .diffuse import gen_diffuse
from .rir import Rir, schroeder_t60, simulate_rir
from .scene import SceneSpec

log = get_logger("simulate.mixer")

CROSSFADE_S = 0.05
POINT_STREAM = 1
DIFFUSE_STREAM = 2


def _power(x) -> float:
    a = x.channel(0) if isinstance(x, Waveform) else np.asarray(x, dtype=np.float64)
    if a.ndim == 2:
        a = a[:, 0]
    return float(np.mean(a ** 2))


def snr_gain(signal_ref, noise, target_snr: float) -> float:
    """Gain for `noise` so that P_signal / P_noise = 10^(snr / 10), both measured on channel 0."""
    ps, pn = _power(signal_ref), _power(noise)
    if pn <= 0:
        raise ValueError("noise has zero power")
    if ps <= 0:
        raise ValueError("signal has zero power")
    return float(np.sqrt(ps / (pn * 10.0 ** (target_snr / 10.0))))


def measured_snr(signal_ref, noise) -> float:
    return float(10.0 * np.log10(_power(signal_ref) / _power(noise)))


def fit_length(clip: np.ndarray, length: int, rng: np.random.Generator, fs: int = 16000,
               crossfade: float = CROSSFADE_S) -> np.ndarray:
    """Random crop when the clip is long enough, otherwise loop it with a linear crossfade."""
    x = np.asarray(clip, dtype=np.float64)
    if x.size == 0:
        raise ValueError("empty noise clip")
    if x.size >= length:
        start = int(rng.integers(0, x.size - length + 1))
        return x[start:start + length].copy()
    xf = min(int(round(crossfade * fs)), x.size // 2)
    out = x.copy()
    if xf == 0:
        reps = int(np.ceil(length / x.size))
        return np.tile(x, reps)[:length]
    ramp = np.linspace(0.0, 1.0, xf, endpoint=False)
    while out.size < length:
        head = out[-xf:] * (1.0 - ramp) + x[:xf] * ramp
        out = np.concatenate([out[:-xf], head, x[xf:]])
    return out[:length]


@dataclass
class MixtureRecord:
    utterance_id: str
    mixture: Waveform
    target_reverberant: Waveform
    target_anechoic: Waveform
    noise_sum: Waveform
    scene: SceneSpec
    point_noises: List[Waveform] = field(default_factory=list)
    diffuse_noise: Optional[Waveform] = None
    noise_clips: List[str] = field(default_factory=list)
    measured_t60: float = float("nan")

    def additivity_error(self) -> float:
        diff = self.mixture.samples - self.target_reverberant.samples - self.noise_sum.samples
        return float(np.linalg.norm(diff) / max(np.linalg.norm(self.mixture.samples), 1e-12))


def _clip_name(bank, idx: int) -> str:
    names = getattr(bank, "names", None)
    return names[idx] if names is not None else str(idx)


def _convolve(x: np.ndarray, rir: Rir, n: int) -> np.ndarray:
    return np.stack([fftconvolve(x, h)[:n] for h in rir.responses], axis=1)


def build_mixture(
    utterance: Waveform,
    scene: SceneSpec,
    noise_bank: Sequence[Waveform],
    diffuse_source: Waveform,
    utterance_id: str = "",
    snr_override: Optional[float] = None,
    max_order: Optional[int] = None,
    ref_channel: int = 0,
) -> MixtureRecord:
    fs = utterance.sample_rate
    if diffuse_source.sample_rate != fs:
        raise ValueError(f"diffuse source rate {diffuse_source.sample_rate} != utterance rate {fs}")
    if len(noise_bank) < scene.num_noises:
        raise ValueError(f"noise bank has {len(noise_bank)} clips, scene needs {scene.num_noises}")
    s = utterance.channel(0)
    n = s.size

    room, array = scene.room, scene.array
    target_rir = simulate_rir(room, scene.target_pos, array, max_order, fs)
    target_rev = _convolve(s, target_rir, n)
    try:
        measured_t60 = schroeder_t60(target_rir, mic=ref_channel)
    except ValueError:
        measured_t60 = float("nan")
    direct = simulate_rir(room, scene.target_pos, array.positions[ref_channel], fs=fs, direct_only=True)
    anechoic = _convolve(s, direct, n)

    rng_point = np.random.default_rng([scene.rng_seed, POINT_STREAM])
    picks = rng_point.choice(len(noise_bank), size=scene.num_noises, replace=False)
    points, names = [], []
    for idx, pos, snr in zip(picks, scene.noise_positions, scene.snr_point):
        clip = noise_bank[int(idx)]
        if clip.sample_rate != fs:
            raise ValueError(f"noise clip rate {clip.sample_rate} != utterance rate {fs}")
        src = fit_length(clip.channel(0), n, rng_point, fs)
        rev = _convolve(src, simulate_rir(room, pos, array, max_order, fs), n)
        gain = snr_gain(target_rev, rev, snr if snr_override is None else snr_override)
        points.append(rev * gain)
        names.append(_clip_name(noise_bank, int(idx)))

    rng_diffuse = np.random.default_rng([scene.rng_seed, DIFFUSE_STREAM])
    diffuse = gen_diffuse(diffuse_source, array, fs, length=n, rng=rng_diffuse).samples
    diffuse = diffuse * snr_gain(target_rev, diffuse, scene.snr_diffuse if snr_override is None else snr_override)

    noise_sum = diffuse + (np.sum(points, axis=0) if points else 0.0)
    mixture = target_rev + noise_sum
    log.debug("\n" + block(
        "MIXTURE",
        utterance=utterance_id,
        noises=scene.num_noises,
        t60=f"{room.t60:.3f}",
        measured_t60=f"{measured_t60:.3f}",
        snr_diffuse=f"{scene.snr_diffuse:.2f}",
    ))
    return MixtureRecord(
        utterance_id=utterance_id,
        mixture=Waveform(mixture, fs),
        target_reverberant=Waveform(target_rev, fs),
        target_anechoic=Waveform(anechoic, fs),
        noise_sum=Waveform(noise_sum, fs),
        scene=scene,
        point_noises=[Waveform(p, fs) for p in points],
        diffuse_noise=Waveform(diffuse, fs),
        noise_clips=names,
        measured_t60=measured_t60,
    )
