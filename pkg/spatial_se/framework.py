"""
Encoder / separator / decoder composition.

An encoder maps a Waveform to features, a separator maps features to S feature
tensors of the same shape, and a decoder maps each back to a Waveform. Only the
STFT pair is provided here; any object with the same call signatures plugs in.
"""
from typing import List, Optional, Protocol, Sequence

import numpy as np

from .stft import ComplexSpectrogram, StftConfig, Waveform, istft, stft


class Separator(Protocol):
    num_sources: int

    def __call__(self, features: ComplexSpectrogram) -> List[ComplexSpectrogram]:
        ...


class StftEncoder:
    def __init__(self, config: Optional[StftConfig] = None):
        self.config = config or StftConfig()

    def __call__(self, wave: Waveform) -> ComplexSpectrogram:
        return stft(wave, self.config)


class IStftDecoder:
    def __init__(self, config: Optional[StftConfig] = None):
        self.config = config or StftConfig()

    def __call__(self, features: ComplexSpectrogram, length: int) -> Waveform:
        return istft(features, self.config, out_length=length)


class IdentitySeparator:
    num_sources = 1

    def __call__(self, features: ComplexSpectrogram) -> List[ComplexSpectrogram]:
        return [features]


class MaskingSeparator:
    """One real (frames, bins) mask per source, broadcast over channels."""

    def __init__(self, masks: Sequence[np.ndarray]):
        if not masks:
            raise ValueError("at least one mask is required")
        self.masks = [np.asarray(m, dtype=np.float64) for m in masks]
        self.num_sources = len(self.masks)

    def __call__(self, features: ComplexSpectrogram) -> List[ComplexSpectrogram]:
        out = []
        for m in self.masks:
            if m.shape != features.data.shape[:2]:
                raise ValueError(f"mask shape {m.shape} != features {features.data.shape[:2]}")
            out.append(features.with_data(features.data * m[:, :, None]))
        return out


def run_pipeline(mixture: Waveform, encoder, separator: Separator, decoder) -> List[Waveform]:
    enc_cfg = getattr(encoder, "config", None)
    dec_cfg = getattr(decoder, "config", None)
    if enc_cfg is not None and dec_cfg is not None and enc_cfg != dec_cfg:
        raise ValueError(f"encoder/decoder configs differ: {enc_cfg} vs {dec_cfg}")

    features = encoder(mixture)
    outputs = separator(features)
    if len(outputs) != separator.num_sources:
        raise ValueError(
            f"separator returned {len(outputs)} outputs, declared {separator.num_sources}"
        )
    for i, o in enumerate(outputs):
        if o.data.shape[:2] != features.data.shape[:2]:
            raise ValueError(f"output {i} shape {o.data.shape} != input {features.data.shape}")
    return [decoder(o, mixture.num_samples) for o in outputs]
