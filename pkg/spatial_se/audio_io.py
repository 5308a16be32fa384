import os
from typing import Optional

import numpy as np
import soundfile as sf

from .stft import Waveform

MAX_CHANNELS = 8
SUBTYPES = {"float": "FLOAT", "pcm16": "PCM_16"}


def read_wav(path: str, expected_rate: Optional[int] = None) -> Waveform:
    """Load a WAV as float64 (samples, channels). No resampling: a rate mismatch is an error."""
    if not os.path.isfile(path):
        raise FileNotFoundError(f"Not a file: {path}")
    data, rate = sf.read(path, dtype="float64", always_2d=True)
    if data.shape[1] > MAX_CHANNELS:
        raise ValueError(f"{path}: {data.shape[1]} channels (max {MAX_CHANNELS})")
    if expected_rate is not None and rate != expected_rate:
        raise ValueError(f"{path}: sample rate {rate} Hz, expected {expected_rate} Hz")
    return Waveform(data, rate)


def write_wav(path: str, wave: Waveform, fmt: str = "float") -> str:
    if fmt not in SUBTYPES:
        raise ValueError(f"unknown WAV format {fmt!r}; expected one of {sorted(SUBTYPES)}")
    if wave.num_channels > MAX_CHANNELS:
        raise ValueError(f"{wave.num_channels} channels (max {MAX_CHANNELS})")
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    samples = wave.samples
    if fmt == "pcm16":
        samples = np.clip(samples, -1.0, 1.0)
    sf.write(path, samples.astype(np.float32), wave.sample_rate, subtype=SUBTYPES[fmt])
    return path
