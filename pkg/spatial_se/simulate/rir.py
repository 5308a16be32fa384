"""
Shoebox image-source room impulse responses.

Image (m, q) per axis sits at (1 - 2q) s + 2 m L and has |m - q| + |m| wall
reflections; each reflection scales the pressure by sqrt(1 - alpha). Arrivals are
rendered with an 81-tap Hann-windowed sinc fractional delay, all shifted by a
global 40-sample offset so the kernel never starts before t = 0.
"""
import itertools
import math
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from ..logging_utils import block, get_logger
from .geometry import ArrayGeometry, RoomSpec

log = get_logger("simulate.rir")

FD_TAPS = 81
FD_HALF = FD_TAPS // 2
GLOBAL_DELAY = 40
CHUNK = 8192
FIT_START_DB = -5.0
FIT_STOP_DB = -25.0


@dataclass(frozen=True)
class Rir:
    responses: np.ndarray
    sample_rate: int
    direct_only: bool = False

    def __post_init__(self):
        h = np.asarray(self.responses, dtype=np.float64)
        if h.ndim == 1:
            h = h[None, :]
        if h.ndim != 2:
            raise ValueError(f"RIR must be (mics, length), got {h.shape}")
        if not np.all(np.isfinite(h)):
            raise ValueError("RIR contains non-finite taps")
        object.__setattr__(self, "responses", h)

    @property
    def num_mics(self) -> int:
        return self.responses.shape[0]

    @property
    def length(self) -> int:
        return self.responses.shape[1]


def auto_max_order(room: RoomSpec, duration: float) -> int:
    return int(math.ceil(room.c * duration / min(room.dims))) + 1


def rir_length(duration: float, fs: int) -> int:
    return int(math.ceil(duration * fs)) + FD_TAPS + GLOBAL_DELAY


def image_sources(room: RoomSpec, src, max_order: Optional[int] = None,
                  reach: Optional[float] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Image positions (N, 3) and reflection counts (N,) with at most `max_order`
    reflections and within `reach` metres of the room (a superset of what any
    interior receiver needs).
    """
    src = np.asarray(src, dtype=np.float64)
    if not room.contains(src):
        raise ValueError(f"source {src.tolist()} is outside the room {list(room.dims)}")
    if max_order is None:
        max_order = auto_max_order(room, room.t60)
    elif max_order < 1:
        raise ValueError(f"max_order must be >= 1, got {max_order}")
    if reach is None:
        reach = room.c * room.t60
    dims = np.asarray(room.dims)
    slack = reach + float(np.linalg.norm(dims))

    pos_parts, refl_parts = [], []
    for q in itertools.product((0, 1), repeat=3):
        axes, counts = [], []
        for a in range(3):
            n = min(max_order, int(math.ceil(slack / (2.0 * dims[a]))) + 1)
            m = np.arange(-n, n + 1)
            axes.append((1 - 2 * q[a]) * src[a] + 2.0 * m * dims[a])
            counts.append(np.abs(m - q[a]) + np.abs(m))
        gx, gy, gz = np.meshgrid(*axes, indexing="ij")
        cx, cy, cz = np.meshgrid(*counts, indexing="ij")
        refl = (cx + cy + cz).ravel()
        pts = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)
        keep = (refl <= max_order) & (np.linalg.norm(pts - dims / 2.0, axis=1) <= slack)
        pos_parts.append(pts[keep])
        refl_parts.append(refl[keep])
    return np.concatenate(pos_parts), np.concatenate(refl_parts)


def _fractional_delay_kernels(frac: np.ndarray) -> np.ndarray:
    x = np.arange(-FD_HALF, FD_HALF + 1)[None, :] - frac[:, None]
    return np.sinc(x) * 0.5 * (1.0 + np.cos(np.pi * x / (FD_HALF + 1)))


def _render_grouped(delays: np.ndarray, amps: np.ndarray, groups: np.ndarray,
                    n_groups: int, length: int) -> np.ndarray:
    """One response row per group id; arrivals past `length` are dropped."""
    base = np.floor(delays).astype(np.int64)
    frac = delays - base
    h = np.zeros(n_groups * length)
    taps = np.arange(FD_TAPS)
    for s in range(0, delays.size, CHUNK):
        sl = slice(s, s + CHUNK)
        idx = base[sl, None] + taps[None, :]
        vals = amps[sl, None] * _fractional_delay_kernels(frac[sl])
        ok = idx < length
        flat = (groups[sl, None] * length + idx)[ok]
        h += np.bincount(flat, weights=vals[ok], minlength=n_groups * length)
    return h.reshape(n_groups, length)


def _render(delays: np.ndarray, amps: np.ndarray, length: int) -> np.ndarray:
    return _render_grouped(delays, amps, np.zeros(delays.size, dtype=np.int64), 1, length)[0]


def _arrivals(room: RoomSpec, images: np.ndarray, refl: np.ndarray, mic: np.ndarray,
              reach: float, fs: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Delays in samples, spherical spreading and reflection counts seen by `mic`."""
    d = np.linalg.norm(images - mic[None, :], axis=1)
    keep = (d <= reach) | (refl == 0)
    d, r = d[keep], refl[keep]
    spread = 1.0 / (4.0 * np.pi * np.maximum(d, 1e-3))
    return d / room.c * fs + GLOBAL_DELAY - FD_HALF, spread, r


def _mic_positions(mics) -> np.ndarray:
    if isinstance(mics, ArrayGeometry):
        return mics.positions
    p = np.asarray(mics, dtype=np.float64)
    return p[None, :] if p.ndim == 1 else p


def simulate_rir(
    room: RoomSpec,
    src,
    mics: Union[ArrayGeometry, np.ndarray],
    max_order: Optional[int] = None,
    fs: int = 16000,
    direct_only: bool = False,
    duration: Optional[float] = None,
) -> Rir:
    """
    Impulse responses (mics, length) from `src` to every mic. Images farther than
    c * duration (default T60) are dropped; length = ceil(duration * fs) + 81 + 40.
    direct_only keeps the direct path alone (the anechoic response).
    """
    duration = room.t60 if duration is None else duration
    pos = _mic_positions(mics)
    for p in pos:
        if not room.contains(p):
            raise ValueError(f"microphone {p.tolist()} is outside the room {list(room.dims)}")
    src = np.asarray(src, dtype=np.float64)
    reach = room.c * duration
    if direct_only:
        if not room.contains(src):
            raise ValueError(f"source {src.tolist()} is outside the room {list(room.dims)}")
        images, refl = src[None, :], np.zeros(1, dtype=np.int64)
    else:
        images, refl = image_sources(room, src, max_order, reach)

    length = rir_length(duration, fs)
    beta = room.reflection
    out = np.zeros((pos.shape[0], length))
    for i, mic in enumerate(pos):
        delays, spread, r = _arrivals(room, images, refl, mic, reach, fs)
        out[i] = _render(delays, beta ** r * spread, length)

    log.debug("\n" + block(
        "RIR",
        images=int(images.shape[0]),
        mics=pos.shape[0],
        length=length,
        direct_only=direct_only,
    ))
    return Rir(out, fs, direct_only)


# ---------- decay analysis ---------------------------------------------------

def _decay_t60(energy: np.ndarray, fs: int) -> float:
    edc = np.cumsum(energy[::-1])[::-1]
    if edc[0] <= 0:
        raise ValueError("impulse response has no energy")
    with np.errstate(divide="ignore"):
        db = 10.0 * np.log10(edc / edc[0])
    start = int(np.argmax(db <= FIT_START_DB))
    if db[start] > FIT_START_DB or not np.any(db <= FIT_STOP_DB):
        raise ValueError("energy decay does not reach -25 dB")
    stop = int(np.argmax(db <= FIT_STOP_DB))
    if stop - start < 2:
        return 3.0 * max(stop - start, 1) / fs
    t = np.arange(start, stop + 1) / fs
    slope = np.polyfit(t, db[start:stop + 1], 1)[0]
    return float(-60.0 / slope)


def schroeder_curve(rir: np.ndarray) -> np.ndarray:
    """Backward-integrated energy decay curve in dB (0 dB at t = 0)."""
    e = np.asarray(rir, dtype=np.float64) ** 2
    edc = np.cumsum(e[::-1])[::-1]
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(edc / edc[0])


def schroeder_t60(rir: Union[Rir, np.ndarray], fs: Optional[int] = None, mic: int = 0) -> float:
    """T60 extrapolated from a line fit of the Schroeder curve between -5 and -25 dB."""
    if isinstance(rir, Rir):
        fs = fs or rir.sample_rate
        h = rir.responses[mic]
    else:
        h = np.asarray(rir, dtype=np.float64)
        if fs is None:
            raise ValueError("fs is required for a bare impulse response")
    return _decay_t60(h ** 2, fs)


def calibrate_absorption(room: RoomSpec, src, mic, fs: int = 16000,
                         max_order: Optional[int] = None, duration: Optional[float] = None,
                         iterations: int = 40, tol: float = 0.02) -> float:
    """
    Absorption for which the response `simulate_rir` renders from `src` to `mic`
    measures the room's T60 under `schroeder_t60`.

    Arrivals are rendered once per reflection count, so each candidate alpha is a
    weighted sum of those rows. The search starts at `room.absorption`, walks out
    until the measured T60 brackets the target, then bisects. The fitted T60 is
    not monotone in alpha near zero (truncation at c * duration flattens the
    tail), so only the bracket found this way is refined.
    """
    duration = room.t60 if duration is None else duration
    reach = room.c * duration
    images, refl = image_sources(room, src, max_order, reach)
    mic = np.asarray(mic, dtype=np.float64).reshape(3)
    if not room.contains(mic):
        raise ValueError(f"microphone {mic.tolist()} is outside the room {list(room.dims)}")
    delays, spread, r = _arrivals(room, images, refl, mic, reach, fs)
    orders, groups = np.unique(r, return_inverse=True)
    rows = _render_grouped(delays, spread, groups.reshape(-1), orders.size, rir_length(duration, fs))
    target = room.t60
    seen = {}

    def measured(alpha: float) -> float:
        if alpha not in seen:
            h = np.sqrt(1.0 - alpha) ** orders @ rows
            try:
                seen[alpha] = _decay_t60(h ** 2, fs)
            except ValueError:
                seen[alpha] = math.inf
        return seen[alpha]

    def best() -> float:
        return min(seen, key=lambda a: abs(seen[a] - target))

    lo = hi = None
    a = min(max(room.absorption, 1e-4), 0.999)
    if measured(a) >= target:
        lo = a
        while a < 0.999:
            a = min(1.0 - 0.5 * (1.0 - a), 0.999)
            if measured(a) < target:
                hi = a
                break
            lo = a
    else:
        hi = a
        while a > 1e-4:
            a = max(0.5 * a, 1e-4)
            if measured(a) >= target:
                lo = a
                break
            hi = a
    if lo is None or hi is None:
        alpha = best()
        log.warning("\n" + block("T60 NOT REACHABLE", t60=target, absorption=alpha,
                                 measured=seen[alpha]))
        return float(alpha)

    # measured(lo) >= t60 > measured(hi), lo < hi
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        m = measured(mid)
        if abs(m - target) <= tol * target:
            break
        if m >= target:
            lo = mid
        else:
            hi = mid
    alpha = best()
    log.debug("\n" + block("ABSORPTION CALIBRATED", t60=target, absorption=f"{alpha:.4f}",
                           measured=f"{seen[alpha]:.4f}", evaluations=len(seen)))
    return float(alpha)
