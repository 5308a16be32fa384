"""
Beamformer weight computation and application.

All variants return per-bin filters w(f) of length M*K; the enhanced output is
s(t, f) = w(f)^H y~(t, f) where y~ is the (possibly stacked) observation.
"""
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from ..errors import NumericalError
from ..logging_utils import get_logger
from ..stft import ComplexSpectrogram
from .psd import (
    PsdMatrix, _arr, _obs, diag_load, hermitian, principal_eigenpairs, stable_solve,
    stacked_frames, steering_vector, weighted_covariance,
)

log = get_logger("beamforming.weights")

DISTORTIONLESS = ("mvdr_rtf", "mpdr_rtf", "wmpdr_rtf", "wpd_rtf")
SOUDEN = ("mvdr_souden", "mpdr_souden", "wmpdr_souden", "wpd_souden")
VARIANTS = (
    "mvdr_rtf", "mvdr_souden", "mpdr_rtf", "mpdr_souden", "wmpdr_rtf", "wmpdr_souden",
    "wpd_rtf", "wpd_souden", "sdw_mwf", "r1_mwf", "mfmcwf", "gev_ban",
)


@dataclass(frozen=True)
class BeamformerConfig:
    variant: str = "mvdr_souden"
    ref_channel: int = 0
    mu: float = 1.0
    diag_loading: float = 1e-6
    taps: int = 5
    delay: int = 3
    power_floor: float = 1e-8
    mask_floor: float = 1e-4

    def validate(self) -> "BeamformerConfig":
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown beamformer variant {self.variant!r}; expected one of {list(VARIANTS)}")
        if self.mu < 0:
            raise ValueError(f"mu must be >= 0, got {self.mu}")
        if self.diag_loading < 0:
            raise ValueError(f"diag_loading must be >= 0, got {self.diag_loading}")
        if self.taps < 1 or self.delay < 0:
            raise ValueError(f"need taps >= 1 and delay >= 0, got {self.taps}, {self.delay}")
        if self.ref_channel < 0:
            raise ValueError(f"ref_channel must be >= 0, got {self.ref_channel}")
        if self.power_floor <= 0 or not 0 <= self.mask_floor <= 1:
            raise ValueError("power_floor must be > 0 and mask_floor in [0, 1]")
        return self

    @property
    def multi_frame(self) -> bool:
        return self.variant.startswith("wpd") or self.variant == "mfmcwf"

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class BeamformerWeights:
    w: np.ndarray
    taps: int = 1
    delay: int = 0
    ref_channel: int = 0
    variant: str = ""

    def __post_init__(self):
        w = np.asarray(self.w, dtype=np.complex128)
        if w.ndim != 2:
            raise ValueError(f"weights must be (bins, M*K), got {w.shape}")
        if self.taps < 1 or self.delay < 0:
            raise ValueError(f"need taps >= 1 and delay >= 0, got {self.taps}, {self.delay}")
        if w.shape[1] % self.taps:
            raise ValueError(f"filter length {w.shape[1]} is not a multiple of taps {self.taps}")
        if not np.all(np.isfinite(w)):
            raise NumericalError(f"non-finite {self.variant or 'beamformer'} weights")
        object.__setattr__(self, "w", w)

    @property
    def num_bins(self) -> int:
        return self.w.shape[0]

    @property
    def num_channels(self) -> int:
        return self.w.shape[1] // self.taps


def _require(value, what: str, variant: str):
    if value is None:
        raise ValueError(f"{variant} needs {what}")
    return value


def _distortionless(inv_mat: np.ndarray, d: np.ndarray, eps: float) -> np.ndarray:
    num = stable_solve(inv_mat, d, eps)
    den = np.einsum("fm,fm->f", d.conj(), num)
    return num / den[:, None]


def _souden(mat: np.ndarray, psd_s: np.ndarray, ref: int, eps: float) -> np.ndarray:
    """mat^{-1}[:, :M] Phi_s u_ref / trace(mat^{-1}[:M, :M] Phi_s); mat may be stacked (M*K)."""
    n_ch = psd_s.shape[-1]
    rhs = np.zeros((mat.shape[0], mat.shape[1], n_ch), dtype=np.complex128)
    rhs[:, :n_ch, :] = psd_s
    g = stable_solve(mat, rhs, eps)
    tr = np.trace(g[:, :n_ch, :n_ch], axis1=-2, axis2=-1)
    if np.any(np.abs(tr) == 0):
        raise NumericalError("zero trace in Souden normalization")
    return g[..., ref] / tr[:, None]


def _gev_ban(psd_s: np.ndarray, psd_n: np.ndarray, ref: int) -> np.ndarray:
    n_bins, n_ch, _ = psd_s.shape
    w = np.empty((n_bins, n_ch), dtype=np.complex128)
    for f in range(n_bins):
        try:
            _, vecs = scipy.linalg.eigh(psd_s[f], psd_n[f])
        except np.linalg.LinAlgError as e:
            raise NumericalError(f"generalized eigenproblem failed at bin {f}") from e
        w[f] = vecs[:, -1]
    num = np.sqrt(np.abs(np.einsum("fa,fab,fbc,fc->f", w.conj(), psd_n, psd_n, w)))
    den = np.abs(np.einsum("fa,fab,fb->f", w.conj(), psd_n, w))
    w = w * np.divide(num, den, out=np.zeros_like(num), where=den != 0)[:, None]
    ref_entry = w[:, ref]
    mag = np.abs(ref_entry)
    return w * np.where(mag > 0, np.conj(ref_entry) / np.where(mag > 0, mag, 1.0), 1.0)[:, None]


def compute_weights(cfg: BeamformerConfig, psd_speech=None, psd_noise=None, steering=None,
                    power=None, observation=None, target=None) -> BeamformerWeights:
    """
    Per-bin filters for `cfg.variant`.

    psd_speech / psd_noise are (F, M, M) PSDs. `steering` defaults to the RTF
    estimated from psd_speech. Weighted variants (wmpdr_*, wpd_*) need `power` and
    `observation`; mpdr_* need `observation`; mfmcwf needs `observation` and the
    reference `target` spectrogram (frames, bins).
    """
    cfg.validate()
    v = cfg.variant
    ref, eps, mu = cfg.ref_channel, cfg.diag_loading, cfg.mu
    taps, delay = (cfg.taps, cfg.delay) if cfg.multi_frame else (1, 0)

    if v == "mfmcwf":
        y = stacked_frames(_obs(_require(observation, "an observation", v)), taps, delay)
        s = _obs(_require(target, "a reference target", v))
        if s.ndim == 3:
            s = s[:, :, 0]
        if s.shape != y.shape[:2]:
            raise ValueError(f"target shape {s.shape} != observation frames/bins {y.shape[:2]}")
        cov = hermitian(np.einsum("tfm,tfn->fmn", y, y.conj()))
        cov = diag_load(cov, eps).matrix
        cross = np.einsum("tfm,tf->fm", y, s.conj())
        return BeamformerWeights(stable_solve(cov, cross), taps, delay, ref, v)

    phi_s = _arr(_require(psd_speech, "a speech PSD", v))
    n_ch = phi_s.shape[-1]
    if ref >= n_ch:
        raise ValueError(f"ref_channel {ref} out of range for {n_ch} channels")

    if v in ("mvdr_rtf", "mvdr_souden", "sdw_mwf", "r1_mwf", "gev_ban"):
        phi_n = _arr(_require(psd_noise, "a noise PSD", v))
        if phi_n.shape != phi_s.shape:
            raise ValueError(f"speech PSD {phi_s.shape} and noise PSD {phi_n.shape} differ")
        mat = diag_load(phi_n, eps).matrix
    elif v.startswith("mpdr"):
        mat = diag_load(weighted_covariance(_require(observation, "an observation", v)), eps).matrix
    else:
        _require(power, "power weights (lambda)", v)
        obs = _require(observation, "an observation", v)
        mat = diag_load(weighted_covariance(obs, power, taps, delay), eps).matrix

    if v in DISTORTIONLESS:
        d = steering_vector(phi_s, ref, normalize="rtf") if steering is None else np.asarray(steering)
        if d.shape != phi_s.shape[:2]:
            raise ValueError(f"steering shape {d.shape} != (bins, M) {phi_s.shape[:2]}")
        if taps > 1:
            d = np.concatenate([d, np.zeros((d.shape[0], n_ch * (taps - 1)), dtype=d.dtype)], axis=1)
        w = _distortionless(mat, d.astype(np.complex128), 0.0)
    elif v in SOUDEN:
        w = _souden(mat, phi_s, ref, 0.0)
    elif v == "sdw_mwf":
        w = stable_solve(phi_s + mu * mat, phi_s)[..., ref]
    elif v == "r1_mwf":
        sigma, vec = principal_eigenpairs(phi_s)
        rank1 = sigma[:, None, None] * np.einsum("fm,fn->fmn", vec, vec.conj())
        g = stable_solve(mat, rank1)
        tr = np.trace(g, axis1=-2, axis2=-1)
        w = g[..., ref] / (mu + tr)[:, None]
    else:
        w = _gev_ban(phi_s, mat, ref)
    return BeamformerWeights(w, taps, delay, ref, v)


def apply_beamformer(weights: BeamformerWeights, spec: ComplexSpectrogram) -> ComplexSpectrogram:
    y = stacked_frames(spec.data, weights.taps, weights.delay)
    if y.shape[1:] != weights.w.shape:
        raise ValueError(
            f"weights {weights.w.shape} do not fit spectrogram bins/channels {y.shape[1:]}"
        )
    out = np.einsum("fm,tfm->tf", weights.w.conj(), y)
    return spec.with_data(out[:, :, None])
