"""
Elementary criteria: one reference and one estimate in, one scalar out.

Ratio criteria return dB (higher is better) clipped to +-CAP_DB; the wrappers turn
them into losses by negation. MSE criteria are already losses.
"""
from dataclasses import dataclass, field
from typing import Any, Dict

import numpy as np
from scipy.linalg import solve_toeplitz
from scipy.signal import correlate, fftconvolve

from ..stft import ComplexSpectrogram

EPS = 1e-8
CAP_DB = 60.0
CI_SDR_TAPS = 512
CI_SDR_LOADING = 1e-10


def _pair(ref, est):
    ref = np.asarray(ref, dtype=np.float64).ravel()
    est = np.asarray(est, dtype=np.float64).ravel()
    if ref.shape != est.shape:
        raise ValueError(f"length mismatch: ref {ref.shape[0]} vs est {est.shape[0]}")
    if not np.any(ref):
        raise ValueError("reference is all-zero")
    return ref, est


def _ratio_db(num: float, den: float, eps: float) -> float:
    return float(np.clip(10.0 * np.log10((num + eps) / (den + eps)), -CAP_DB, CAP_DB))


def si_snr(ref, est, eps: float = EPS) -> float:
    ref, est = _pair(ref, est)
    target = (np.dot(est, ref) / (np.dot(ref, ref) + eps)) * ref
    noise = est - target
    return _ratio_db(np.dot(target, target), np.dot(noise, noise), eps)


def snr(ref, est, eps: float = EPS) -> float:
    ref, est = _pair(ref, est)
    err = est - ref
    return _ratio_db(np.dot(ref, ref), np.dot(err, err), eps)


def ci_sdr(ref, est, filter_taps: int = CI_SDR_TAPS, eps: float = EPS) -> float:
    """
    Convolution-invariant SDR: the reference may pass through an FIR filter of
    `filter_taps` taps, fitted by least squares (correlation method, Toeplitz
    normal equations with relative diagonal loading).
    """
    ref, est = _pair(ref, est)
    if filter_taps < 1:
        raise ValueError(f"filter_taps must be >= 1, got {filter_taps}")
    if filter_taps >= ref.shape[0]:
        raise ValueError(f"filter_taps ({filter_taps}) must be shorter than the signal")

    n = ref.shape[0]
    auto = correlate(ref, ref, mode="full", method="fft")[n - 1:n - 1 + filter_taps]
    cross = correlate(est, ref, mode="full", method="fft")[n - 1:n - 1 + filter_taps]
    auto = auto.copy()
    auto[0] *= 1.0 + CI_SDR_LOADING
    if auto[0] <= 0:
        raise ValueError("singular normal equations")
    h = solve_toeplitz(auto, cross)
    target = fftconvolve(ref, h)[:n]
    noise = est - target
    return _ratio_db(np.dot(target, target), np.dot(noise, noise), eps)


def _as_array(x) -> np.ndarray:
    if isinstance(x, ComplexSpectrogram):
        return x.data
    return np.asarray(x)


def mse_spectrum(ref, est) -> float:
    a, b = _as_array(ref), _as_array(est)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.mean(np.abs(a - b) ** 2))


def mse_mask(ref_mask, est_mask) -> float:
    a = np.asarray(getattr(ref_mask, "values", ref_mask), dtype=np.float64)
    b = np.asarray(getattr(est_mask, "values", est_mask), dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))


# ---------- class-based criteria ---------------------------------------------

class Criterion:
    """
    A named scalar comparison. `domain` says which view of a LossBatch it reads:
    "time" (waveform channels), "spectrum" (complex spectrograms) or "mask".
    """
    name = "criterion"
    domain = "time"
    higher_is_better = False

    def __call__(self, ref, est) -> float:
        raise NotImplementedError

    def loss(self, ref, est) -> float:
        v = self(ref, est)
        return -v if self.higher_is_better else v


class SISNR(Criterion):
    name = "si_snr"
    higher_is_better = True

    def __init__(self, eps: float = EPS):
        if eps <= 0:
            raise ValueError("eps must be > 0")
        self.eps = eps

    def __call__(self, ref, est) -> float:
        return si_snr(ref, est, self.eps)


class SNR(SISNR):
    name = "snr"

    def __call__(self, ref, est) -> float:
        return snr(ref, est, self.eps)


class CISDR(Criterion):
    name = "ci_sdr"
    higher_is_better = True

    def __init__(self, filter_taps: int = CI_SDR_TAPS, eps: float = EPS):
        if filter_taps < 1:
            raise ValueError("filter_taps must be >= 1")
        if eps <= 0:
            raise ValueError("eps must be > 0")
        self.filter_taps = filter_taps
        self.eps = eps

    def __call__(self, ref, est) -> float:
        return ci_sdr(ref, est, self.filter_taps, self.eps)


class SpectrumMSE(Criterion):
    name = "mse_spectrum"
    domain = "spectrum"

    def __call__(self, ref, est) -> float:
        return mse_spectrum(ref, est)


class MaskMSE(Criterion):
    name = "mse_mask"
    domain = "mask"

    def __call__(self, ref, est) -> float:
        return mse_mask(ref, est)


CRITERIA = {
    "si_snr": SISNR,
    "snr": SNR,
    "ci_sdr": CISDR,
    "mse_spectrum": SpectrumMSE,
    "mse_mask": MaskMSE,
}


@dataclass(frozen=True)
class CriterionSpec:
    kind: str
    params: Dict[str, Any] = field(default_factory=dict)

    def build(self) -> Criterion:
        if self.kind not in CRITERIA:
            raise ValueError(f"unknown criterion {self.kind!r}; expected one of {sorted(CRITERIA)}")
        try:
            return CRITERIA[self.kind](**self.params)
        except TypeError as e:
            raise ValueError(f"bad params for {self.kind}: {self.params}") from e
