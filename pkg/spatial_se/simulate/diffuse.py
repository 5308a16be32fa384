"""
Spherically isotropic diffuse noise for a microphone array.

Disjoint segments of one mono noise clip serve as mutually uncorrelated inputs;
per STFT bin they are mixed by C(f) with C^H C = Gamma(f), Gamma_ij = sinc(2 pi f d_ij / c).
"""
from typing import Optional

import numpy as np

from ..stft import ComplexSpectrogram, StftConfig, Waveform, istft, stft
from .geometry import SPEED_OF_SOUND, ArrayGeometry

DIFFUSE_N_FFT = 256
DIFFUSE_HOP = 64


def spherical_coherence(positions: np.ndarray, freqs: np.ndarray, c: float = SPEED_OF_SOUND) -> np.ndarray:
    """Gamma (F, M, M); np.sinc(x) is sin(pi x) / (pi x)."""
    d = np.linalg.norm(positions[:, None, :] - positions[None, :, :], axis=-1)
    return np.sinc(2.0 * freqs[:, None, None] * d[None, :, :] / c)


def mixing_matrices(coherence: np.ndarray) -> np.ndarray:
    """C(f) = sqrt(D) V^H from Gamma = V D V^H (negative eigenvalues clipped)."""
    vals, vecs = np.linalg.eigh(coherence)
    return np.sqrt(np.clip(vals, 0.0, None))[:, :, None] * np.conj(np.swapaxes(vecs, -1, -2))


def gen_diffuse(
    noise: Waveform,
    array: ArrayGeometry,
    fs: Optional[int] = None,
    length: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
    c: float = SPEED_OF_SOUND,
) -> Waveform:
    fs = fs or noise.sample_rate
    if noise.sample_rate != fs:
        raise ValueError(f"noise sample rate {noise.sample_rate} != {fs}")
    x = noise.channel(0)
    n_mics = array.mic_count
    if length is None:
        length = x.size // n_mics
    if length <= 0 or x.size < n_mics * length:
        raise ValueError(
            f"diffuse source too short: {x.size} samples < {n_mics} x {length} disjoint segments"
        )
    slack = x.size - n_mics * length
    start = int(rng.integers(0, slack + 1)) if rng is not None and slack > 0 else 0
    segs = x[start:start + n_mics * length].reshape(n_mics, length).T
    segs = segs - segs.mean(axis=0, keepdims=True)

    cfg = StftConfig(n_fft=DIFFUSE_N_FFT, hop=DIFFUSE_HOP, sample_rate=fs)
    spec = stft(Waveform(segs, fs), cfg)
    freqs = np.arange(cfg.num_bins) * fs / cfg.n_fft
    mix = mixing_matrices(spherical_coherence(array.positions, freqs, c))
    out = np.einsum("fnm,tfn->tfm", mix.conj(), spec.data)
    return istft(ComplexSpectrogram(out, cfg), out_length=length)
