"""
Time <-> frequency transforms shared by every enhancement path.

Layout conventions:
  Waveform.samples       (n_samples, channels)
  ComplexSpectrogram.data (frames, bins, channels), bins = n_fft // 2 + 1

Multichannel input gets the identical transform per channel; the channel axis is
always last.
"""
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal import get_window

WINDOWS = ("hann", "sqrt-hann", "rectangular")
WINDOW_FLOOR = 1e-8


@dataclass(frozen=True)
class Waveform:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=np.float64)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2:
            raise ValueError(f"waveform must be (samples, channels), got shape {x.shape}")
        if x.shape[1] < 1:
            raise ValueError("waveform needs at least one channel")
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(x)):
            raise ValueError("waveform contains non-finite samples")
        object.__setattr__(self, "samples", x)

    @classmethod
    def from_mono(cls, x: np.ndarray, sample_rate: int) -> "Waveform":
        return cls(np.asarray(x, dtype=np.float64).reshape(-1, 1), sample_rate)

    @property
    def num_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def num_channels(self) -> int:
        return self.samples.shape[1]

    def channel(self, idx: int) -> np.ndarray:
        return self.samples[:, idx]


@dataclass(frozen=True)
class StftConfig:
    n_fft: int = 512
    hop: int = 128
    win_length: Optional[int] = None
    window: str = "hann"
    center_pad: bool = True
    sample_rate: int = 16000

    def __post_init__(self):
        if self.win_length is None:
            object.__setattr__(self, "win_length", self.n_fft)
        self.validate()

    def validate(self) -> None:
        n = self.n_fft
        if n < 2 or n & (n - 1):
            raise ValueError(f"n_fft must be a power of two, got {n}")
        if not 0 < self.win_length <= n:
            raise ValueError(f"win_length must be in (0, n_fft], got {self.win_length}")
        if self.hop <= 0:
            raise ValueError(f"hop must be positive, got {self.hop}")
        if self.hop > self.win_length:
            raise ValueError(f"hop ({self.hop}) > win_length ({self.win_length})")
        if self.window not in WINDOWS:
            raise ValueError(f"unknown window {self.window!r}; expected one of {WINDOWS}")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")

    @property
    def num_bins(self) -> int:
        return self.n_fft // 2 + 1

    @property
    def frame_rate(self) -> float:
        return self.sample_rate / self.hop

    def analysis_window(self) -> np.ndarray:
        """Window of length n_fft (win_length samples centered, zeros outside)."""
        if self.window == "rectangular":
            w = np.ones(self.win_length)
        else:
            w = get_window("hann", self.win_length, fftbins=True)
            if self.window == "sqrt-hann":
                w = np.sqrt(w)
        left = (self.n_fft - self.win_length) // 2
        return np.pad(w, (left, self.n_fft - self.win_length - left))

    def num_frames(self, length: int) -> int:
        padded = length + 2 * (self.n_fft // 2) if self.center_pad else length
        return 1 + math.ceil(max(padded - self.n_fft, 0) / self.hop)


@dataclass(frozen=True)
class ComplexSpectrogram:
    data: np.ndarray
    config: StftConfig = field(default_factory=StftConfig)

    def __post_init__(self):
        d = np.asarray(self.data)
        if d.ndim == 2:
            d = d[:, :, None]
        if d.ndim != 3:
            raise ValueError(f"spectrogram must be (frames, bins, channels), got {d.shape}")
        if d.shape[1] != self.config.num_bins:
            raise ValueError(
                f"bin count {d.shape[1]} does not match n_fft={self.config.n_fft} "
                f"(expected {self.config.num_bins})"
            )
        if not np.all(np.isfinite(d)):
            raise ValueError("spectrogram contains non-finite entries")
        object.__setattr__(self, "data", d.astype(np.complex128, copy=False))

    @property
    def num_frames(self) -> int:
        return self.data.shape[0]

    @property
    def num_bins(self) -> int:
        return self.data.shape[1]

    @property
    def num_channels(self) -> int:
        return self.data.shape[2]

    @property
    def frame_rate(self) -> float:
        return self.config.frame_rate

    def channel(self, idx: int) -> np.ndarray:
        return self.data[:, :, idx]

    def with_data(self, data: np.ndarray) -> "ComplexSpectrogram":
        return ComplexSpectrogram(data, self.config)


def stft(wave: Waveform, cfg: Optional[StftConfig] = None) -> ComplexSpectrogram:
    cfg = cfg or StftConfig(sample_rate=wave.sample_rate)
    x = wave.samples
    if x.shape[0] == 0:
        raise ValueError("cannot transform an empty waveform")
    if cfg.hop > cfg.win_length:
        raise ValueError(f"hop ({cfg.hop}) > win_length ({cfg.win_length})")

    half = cfg.n_fft // 2
    if cfg.center_pad:
        x = np.pad(x, ((half, half), (0, 0)))
    n_frames = cfg.num_frames(wave.num_samples)
    total = (n_frames - 1) * cfg.hop + cfg.n_fft
    if total > x.shape[0]:
        x = np.pad(x, ((0, total - x.shape[0]), (0, 0)))

    # (frames, channels, n_fft)
    frames = sliding_window_view(x, cfg.n_fft, axis=0)[::cfg.hop][:n_frames]
    spec = np.fft.rfft(frames * cfg.analysis_window(), axis=-1)
    return ComplexSpectrogram(np.transpose(spec, (0, 2, 1)), cfg)


def istft(
    spec: ComplexSpectrogram,
    cfg: Optional[StftConfig] = None,
    out_length: Optional[int] = None,
    window_floor: float = WINDOW_FLOOR,
) -> Waveform:
    """
    Weighted overlap-add inverse, normalized by the squared-window sum.

    With window_floor <= 0 the normalization is unguarded and a window sum that
    underflows inside the kept region raises ValueError.
    """
    cfg = cfg or spec.config
    if spec.num_bins != cfg.num_bins:
        raise ValueError(f"spectrogram has {spec.num_bins} bins, config expects {cfg.num_bins}")

    n_frames, _, n_ch = spec.data.shape
    win = cfg.analysis_window()
    frames = np.fft.irfft(np.transpose(spec.data, (0, 2, 1)), n=cfg.n_fft, axis=-1) * win

    total = (n_frames - 1) * cfg.hop + cfg.n_fft
    out = np.zeros((total, n_ch))
    wsum = np.zeros(total)
    for t in range(n_frames):
        s = t * cfg.hop
        out[s:s + cfg.n_fft] += frames[t].T
        wsum[s:s + cfg.n_fft] += win ** 2

    start = cfg.n_fft // 2 if cfg.center_pad else 0
    if out_length is None:
        out_length = max(total - 2 * start, 0)
    keep = slice(start, min(start + out_length, total))

    if window_floor > 0:
        out /= np.maximum(wsum, window_floor)[:, None]
    else:
        region = wsum[keep]
        if region.size and region.min() <= np.finfo(float).tiny:
            raise ValueError("window-sum underflow: configuration is not overlap-add invertible")
        out[keep] /= region[:, None]

    y = out[keep]
    if y.shape[0] < out_length:
        y = np.pad(y, ((0, out_length - y.shape[0]), (0, 0)))
    return Waveform(y, cfg.sample_rate)
