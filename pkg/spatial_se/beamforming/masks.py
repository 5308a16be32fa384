"""Oracle time-frequency masks computed from known target / interference components."""
from dataclasses import dataclass

import numpy as np

from ..stft import ComplexSpectrogram

MASK_EPS = 1e-8


@dataclass(frozen=True)
class TFMask:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError(f"mask must be (frames, bins), got {v.shape}")
        if v.size and (v.min() < 0.0 or v.max() > 1.0):
            raise ValueError("mask values must lie in [0, 1]")
        object.__setattr__(self, "values", v)

    @property
    def shape(self):
        return self.values.shape

    def complement(self) -> "TFMask":
        return TFMask(1.0 - self.values)


def _ref_magnitudes(clean, interference, ref_channel: int):
    s = clean.data if isinstance(clean, ComplexSpectrogram) else np.asarray(clean)
    n = interference.data if isinstance(interference, ComplexSpectrogram) else np.asarray(interference)
    if s.shape != n.shape:
        raise ValueError(f"shape mismatch: clean {s.shape} vs interference {n.shape}")
    if s.ndim == 3:
        s, n = s[:, :, ref_channel], n[:, :, ref_channel]
    return np.abs(s), np.abs(n)


def ideal_ratio_mask(clean, interference, ref_channel: int = 0, eps: float = MASK_EPS) -> TFMask:
    s, n = _ref_magnitudes(clean, interference, ref_channel)
    return TFMask(s / (s + n + eps))


def ideal_binary_mask(clean, interference, ref_channel: int = 0) -> TFMask:
    s, n = _ref_magnitudes(clean, interference, ref_channel)
    return TFMask((s > n).astype(np.float64))
