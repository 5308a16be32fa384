"""
Spatial statistics for mask-driven beamforming.

Shapes: observation (frames T, bins F, channels M); PSD (F, M, M); masks and
power weights (T, F). Every per-bin computation is independent of the others.
"""
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.linalg.lapack import get_lapack_funcs

from ..errors import NumericalError
from ..logging_utils import block, get_logger
from ..stft import ComplexSpectrogram
from .masks import TFMask

log = get_logger("beamforming.psd")

MASS_FLOOR = 1e-8
MAX_LOADING = 1e-2
MIN_ESCALATED_LOADING = 1e-8


@dataclass(frozen=True)
class PsdMatrix:
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.complex128)
        if m.ndim != 3 or m.shape[1] != m.shape[2]:
            raise ValueError(f"PSD must be (bins, M, M), got {m.shape}")
        object.__setattr__(self, "matrix", m)

    @property
    def num_channels(self) -> int:
        return self.matrix.shape[-1]


@dataclass(frozen=True)
class PowerWeights:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or not np.all(v > 0):
            raise ValueError("power weights must be a strictly positive (frames, bins) array")
        object.__setattr__(self, "values", v)


def _obs(spec: Union[ComplexSpectrogram, np.ndarray]) -> np.ndarray:
    return spec.data if isinstance(spec, ComplexSpectrogram) else np.asarray(spec)


def _arr(x) -> np.ndarray:
    for attr in ("matrix", "values"):
        if hasattr(x, attr):
            return getattr(x, attr)
    return np.asarray(x)


def hermitian(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + np.conj(np.swapaxes(m, -1, -2)))


def estimate_psd(spec, mask: Optional[Union[TFMask, np.ndarray]] = None,
                 floor: float = MASS_FLOOR) -> PsdMatrix:
    """Phi(f) = sum_t m y y^H / sum_t m. With no mask, the plain observation covariance."""
    y = _obs(spec)
    if mask is None:
        m = np.ones(y.shape[:2])
    else:
        m = _arr(mask).astype(np.float64)
        if m.shape != y.shape[:2]:
            raise ValueError(f"mask shape {m.shape} != spectrogram {y.shape[:2]}")
    mass = m.sum(axis=0)
    low = np.flatnonzero(mass < floor)
    if low.size:
        raise ValueError(f"mask mass below {floor} at bin {int(low[0])} ({low.size} bins total)")
    psd = np.einsum("tf,tfm,tfn->fmn", m, y, y.conj()) / mass[:, None, None]
    return PsdMatrix(hermitian(psd))


def diag_load(psd, eps: float) -> PsdMatrix:
    """Phi + eps * (trace(Phi) / M) * I per bin."""
    if eps < 0:
        raise ValueError(f"diagonal loading must be >= 0, got {eps}")
    m = _arr(psd)
    n_ch = m.shape[-1]
    if eps == 0:
        return PsdMatrix(m.copy())
    scale = eps * np.real(np.trace(m, axis1=-2, axis2=-1)) / n_ch
    return PsdMatrix(m + scale[:, None, None] * np.eye(n_ch))


def principal_eigenpairs(psd):
    m = _arr(psd)
    if not np.all(np.isfinite(m)):
        raise ValueError("PSD contains non-finite entries")
    vals, vecs = np.linalg.eigh(hermitian(m))
    return vals[..., -1], vecs[..., -1]


def steering_vector(psd_speech, ref_channel: int = 0, normalize: str = "unit") -> np.ndarray:
    """
    Principal eigenvector per bin, phase-aligned so the reference entry is real
    and positive. normalize="rtf" further divides by that entry (relative transfer
    function, unit gain at the reference microphone).
    """
    _, v = principal_eigenpairs(psd_speech)
    ref = v[:, ref_channel]
    mag = np.abs(ref)
    phase = np.where(mag > 0, np.conj(ref) / np.where(mag > 0, mag, 1.0), 1.0)
    v = v * phase[:, None]
    if normalize == "rtf":
        v = v / np.maximum(mag, np.finfo(float).eps)[:, None]
    elif normalize != "unit":
        raise ValueError(f"unknown steering normalization {normalize!r}")
    return v


def estimate_target_power(spec, mask, power_floor: float = 1e-8,
                          mask_floor: float = 1e-4) -> PowerWeights:
    """lambda(t, f): mask-weighted power averaged over channels, floored relative to its max."""
    y = _obs(spec)
    m = np.maximum(_arr(mask).astype(np.float64), mask_floor)
    lam = m * np.mean(np.abs(y) ** 2, axis=-1)
    top = lam.max()
    return PowerWeights(np.maximum(lam, power_floor * top if top > 0 else power_floor))


def stacked_frames(y: np.ndarray, taps: int = 1, delay: int = 0) -> np.ndarray:
    """
    [y_t; y_{t-D}; y_{t-D-1}; ...; y_{t-D-K+2}] along the channel axis, zeros
    before the first frame. Output (T, F, M*K).
    """
    if taps < 1 or delay < 0:
        raise ValueError(f"need taps >= 1 and delay >= 0, got K={taps}, D={delay}")
    if taps == 1:
        return y
    T = y.shape[0]
    parts = [y]
    for j in range(1, taps):
        shift = delay + j - 1
        d = np.zeros_like(y)
        if shift < T:
            d[shift:] = y[:T - shift]
        parts.append(d)
    return np.concatenate(parts, axis=-1)


def weighted_covariance(spec, power=None, taps: int = 1, delay: int = 0) -> PsdMatrix:
    """R(f) = (1/T) sum_t y~ y~^H / lambda(t, f) on the stacked observation."""
    y = stacked_frames(_obs(spec), taps, delay)
    inv = np.ones(y.shape[:2]) if power is None else 1.0 / _arr(power)
    r = np.einsum("tf,tfm,tfn->fmn", inv, y, y.conj()) / y.shape[0]
    return PsdMatrix(hermitian(r))


# ---------- stable Hermitian solves ------------------------------------------

def _pivoted_lu_solve(a: np.ndarray, b: np.ndarray) -> Optional[np.ndarray]:
    getc2, gesc2 = get_lapack_funcs(("getc2", "gesc2"), (a, b))
    lu, ipiv, jpiv, info = getc2(a)
    if info > 0:
        return None
    cols = []
    for k in range(b.shape[1]):
        x, scale = gesc2(lu, b[:, k], ipiv, jpiv)
        cols.append(x / scale)
    return np.stack(cols, axis=1)


def _solve_bin(a: np.ndarray, b: np.ndarray, eps: float, f: int) -> np.ndarray:
    load = eps
    n = a.shape[-1]
    while True:
        loaded = a + load * np.real(np.trace(a)) / n * np.eye(n) if load > 0 else a
        try:
            x = cho_solve(cho_factor(loaded), b)
        except LinAlgError:
            log.debug("\n" + block("CHOLESKY FAILED, PIVOTED LU", bin=f, loading=load))
            x = _pivoted_lu_solve(loaded, b)
        if x is not None and np.all(np.isfinite(x)):
            return x
        nxt = max(load * 10.0, MIN_ESCALATED_LOADING)
        if nxt > MAX_LOADING:
            raise NumericalError(f"singular matrix at bin {f} after diagonal loading up to {load:g}")
        log.warning("\n" + block("ESCALATING DIAGONAL LOADING", bin=f, loading=nxt))
        load = nxt


def stable_solve(mat: np.ndarray, rhs: np.ndarray, eps: float = 0.0) -> np.ndarray:
    """Solve mat[f] x = rhs[f] per bin; rhs may be (F, N) or (F, N, K)."""
    mat = np.asarray(mat, dtype=np.complex128)
    rhs = np.asarray(rhs, dtype=np.complex128)
    vec = rhs.ndim == 2
    if vec:
        rhs = rhs[..., None]
    out = np.empty(rhs.shape, dtype=np.complex128)
    for f in range(mat.shape[0]):
        out[f] = _solve_bin(mat[f], rhs[f], eps, f)
    return out[..., 0] if vec else out
