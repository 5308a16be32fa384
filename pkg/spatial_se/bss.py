"""
Determined blind source separation: AuxIVA with iterative source steering.

Spectrogram layout (frames T, bins F, channels); demixing matrices W are
(F, S, S) with Z(t, f, :) = W(f) y(t, f, :). Updates are rank-1 per steering
index, so no matrix is ever inverted.
"""
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import NumericalError
from .logging_utils import block, get_logger
from .stft import ComplexSpectrogram, StftConfig

log = get_logger("bss")

DEFAULT_ITERATIONS = 50
CONTRAST_EPS = 1e-8


def bss_stft_config(sample_rate: int = 16000) -> StftConfig:
    return StftConfig(n_fft=1024, hop=256, sample_rate=sample_rate)


@dataclass
class DemixingState:
    W: np.ndarray
    Z: ComplexSpectrogram
    iteration: int = 0
    objective_history: List[float] = field(default_factory=list)

    @property
    def num_sources(self) -> int:
        return self.W.shape[-1]


def _contrast(z: np.ndarray, eps: float) -> Tuple[np.ndarray, np.ndarray]:
    r = np.sqrt(np.sum(np.abs(z) ** 2, axis=1))
    return r, 1.0 / np.maximum(r, eps)


def auxiliary_objective(W: np.ndarray, Z: np.ndarray) -> float:
    """2 * sum_t sum_s r_s(t) - T * sum_f log|det W(f)|^2 (non-increasing under the ISS updates)."""
    r = np.sqrt(np.sum(np.abs(Z) ** 2, axis=1))
    _, logdet = np.linalg.slogdet(W)
    return float(2.0 * r.sum() - Z.shape[0] * np.sum(2.0 * logdet))


def auxiva_iss(
    spec: ComplexSpectrogram,
    n_iter: int = DEFAULT_ITERATIONS,
    contrast_eps: float = CONTRAST_EPS,
    n_sources: Optional[int] = None,
) -> Tuple[List[ComplexSpectrogram], DemixingState]:
    n_ch = spec.num_channels
    n_src = n_ch if n_sources is None else int(n_sources)
    if n_src < 2:
        raise ValueError(f"AuxIVA needs at least 2 sources/channels, got {n_src}")
    if n_src > n_ch:
        raise ValueError(f"{n_src} sources from {n_ch} channels is underdetermined")
    if n_iter < 0 or contrast_eps <= 0:
        raise ValueError(f"need n_iter >= 0 and contrast_eps > 0, got {n_iter}, {contrast_eps}")
    y = spec.data
    if n_src < n_ch:
        log.warning(f"AuxIVA: keeping the first {n_src} of {n_ch} channels")
        y = y[:, :, :n_src]

    n_frames, n_bins, _ = y.shape
    Z = y.copy()
    W = np.tile(np.eye(n_src, dtype=np.complex128), (n_bins, 1, 1))
    history = [auxiliary_objective(W, Z)]

    for it in range(n_iter):
        for k in range(n_src):
            _, phi = _contrast(Z, contrast_eps)
            zk = Z[:, :, k].copy()
            num = np.einsum("ts,tfs,tf->fs", phi, Z, zk.conj())
            den = np.einsum("ts,tf->fs", phi, np.abs(zk) ** 2)
            with np.errstate(divide="ignore", invalid="ignore"):
                v = num / den
                v[:, k] = 1.0 - (den[:, k] / n_frames) ** -0.5
            if not np.all(np.isfinite(v)):
                raise NumericalError(
                    f"non-finite AuxIVA update at iteration {it} (steering source {k}); "
                    "is a channel all zeros?"
                )
            Z -= v[None, :, :] * zk[:, :, None]
            row = W[:, k, :].copy()
            W -= v[:, :, None] * row[:, None, :]
        history.append(auxiliary_objective(W, Z))

    if n_iter:
        log.debug("\n" + block(
            "AUXIVA-ISS",
            sources=n_src,
            iterations=n_iter,
            objective=f"{history[0]:.4g} -> {history[-1]:.4g}",
        ))

    state = DemixingState(W=W, Z=spec.with_data(Z), iteration=n_iter, objective_history=history)
    return split_sources(state.Z), state


def split_sources(spec: ComplexSpectrogram) -> List[ComplexSpectrogram]:
    return [spec.with_data(spec.data[:, :, [s]]) for s in range(spec.num_channels)]


def projection_back(
    separated: Union[ComplexSpectrogram, Sequence[ComplexSpectrogram]],
    mixture: ComplexSpectrogram,
    ref_channel: int = 0,
) -> List[ComplexSpectrogram]:
    """
    Rescale each source per bin by c = sum_t conj(z) x_ref / sum_t |z|^2, the
    least-squares fit of the reference mixture channel; all-zero bins get c = 0.
    """
    sources = split_sources(separated) if isinstance(separated, ComplexSpectrogram) else list(separated)
    if not 0 <= ref_channel < mixture.num_channels:
        raise ValueError(f"ref_channel {ref_channel} out of range for {mixture.num_channels} channels")
    x = mixture.channel(ref_channel)
    out = []
    for src in sources:
        z = src.data[:, :, 0]
        if z.shape != x.shape:
            raise ValueError(f"source shape {z.shape} != mixture frames/bins {x.shape}")
        num = np.sum(z.conj() * x, axis=0)
        den = np.sum(np.abs(z) ** 2, axis=0)
        c = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
        out.append(src.with_data((c[None, :] * z)[:, :, None]))
    return out
