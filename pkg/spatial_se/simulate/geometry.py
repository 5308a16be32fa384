"""Shoebox rooms and circular microphone arrays."""
import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

SPEED_OF_SOUND = 343.0
SABINE = 0.161

Vec3 = Tuple[float, float, float]


def absorption_from_t60(dims: Vec3, t60: float) -> float:
    """
    Uniform wall absorption for a target T60: inverse Sabine 0.161 V / (S T60),
    falling back to Eyring 1 - exp(-0.161 V / (S T60)) when Sabine reaches 1.
    """
    if t60 <= 0:
        raise ValueError(f"T60 must be positive, got {t60}")
    lx, ly, lz = dims
    volume = lx * ly * lz
    surface = 2.0 * (lx * ly + lx * lz + ly * lz)
    x = SABINE * volume / (surface * t60)
    if x < 1.0:
        return x
    return 1.0 - math.exp(-x)


@dataclass(frozen=True)
class RoomSpec:
    dims: Vec3
    t60: float
    absorption: float
    c: float = SPEED_OF_SOUND

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(float(d) for d in self.dims))
        if len(self.dims) != 3 or min(self.dims) <= 0:
            raise ValueError(f"room dims must be three positive lengths, got {self.dims}")
        if not 0.0 < self.absorption < 1.0:
            raise ValueError(f"absorption must lie in (0, 1), got {self.absorption}")
        if self.t60 <= 0 or self.c <= 0:
            raise ValueError("T60 and speed of sound must be positive")

    @classmethod
    def from_t60(cls, dims: Vec3, t60: float, c: float = SPEED_OF_SOUND) -> "RoomSpec":
        return cls(tuple(dims), t60, absorption_from_t60(dims, t60), c)

    @property
    def area(self) -> float:
        return self.dims[0] * self.dims[1]

    @property
    def volume(self) -> float:
        return self.area * self.dims[2]

    @property
    def reflection(self) -> float:
        return math.sqrt(1.0 - self.absorption)

    def contains(self, point, margin: float = 0.0) -> bool:
        p = np.asarray(point, dtype=np.float64)
        return bool(np.all(p > margin) and np.all(p < np.asarray(self.dims) - margin))

    def wall_distance(self, point) -> float:
        p = np.asarray(point, dtype=np.float64)
        return float(min(p.min(), (np.asarray(self.dims) - p).min()))

    def to_dict(self) -> dict:
        return {"dims": list(self.dims), "t60": self.t60, "absorption": self.absorption, "c": self.c}


@dataclass(frozen=True)
class ArrayGeometry:
    """Horizontal uniform circular array; mic m sits at angle yaw + 2*pi*m/mic_count."""
    center: Vec3
    yaw: float = 0.0
    radius: float = 0.05
    mic_count: int = 4

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        if self.radius <= 0 or self.mic_count < 1:
            raise ValueError("array needs radius > 0 and at least one mic")

    @property
    def positions(self) -> np.ndarray:
        ang = self.yaw + 2.0 * np.pi * np.arange(self.mic_count) / self.mic_count
        offs = np.stack([np.cos(ang), np.sin(ang), np.zeros_like(ang)], axis=1) * self.radius
        return np.asarray(self.center)[None, :] + offs

    def pairwise_distances(self) -> np.ndarray:
        p = self.positions
        return np.linalg.norm(p[:, None, :] - p[None, :, :], axis=-1)

    def to_dict(self) -> dict:
        return {"center": list(self.center), "yaw": self.yaw, "radius": self.radius,
                "mic_count": self.mic_count}
