"""Classic (non-extended) STOI via pystoi, with explicit precondition errors."""
import warnings

import numpy as np
from pystoi import stoi as _pystoi

STOI_RATE = 10000
FRAME_LEN = 256
HOP = 128
SEGMENT_FRAMES = 30


def _mono(x) -> np.ndarray:
    a = x.channel(0) if hasattr(x, "channel") else np.asarray(x, dtype=np.float64)
    if a.ndim == 2:
        a = a[:, 0]
    return a


def stoi(ref, est, fs: int) -> float:
    """
    Short-time objective intelligibility of `est` against clean `ref`.

    Both are resampled to 10 kHz, frames 40 dB below the loudest reference frame
    are dropped, and 30-frame segments of 15 one-third-octave bands are correlated
    after normalization and clipping at -15 dB.
    """
    x, y = _mono(ref), _mono(est)
    if x.shape != y.shape:
        raise ValueError(f"length mismatch: ref {x.shape[0]} vs est {y.shape[0]} samples")
    if fs < STOI_RATE:
        raise ValueError(f"STOI needs fs >= {STOI_RATE} Hz, got {fs}")
    n_frames = (int(np.ceil(x.size * STOI_RATE / fs)) - FRAME_LEN) // HOP + 1
    if n_frames < SEGMENT_FRAMES:
        raise ValueError(f"signal too short for STOI: {max(n_frames, 0)} frames < {SEGMENT_FRAMES}")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        score = float(_pystoi(x, y, fs, extended=False))
    for w in caught:
        if "Not enough STFT frames" in str(w.message):
            raise ValueError("signal too short for STOI after removing silent frames")
    return score
