"""
Random smart-speaker scenes: a shoebox room, a horizontal circular array, one
target talker and 1..4 point noises, with per-noise and diffuse SNRs.
"""
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from ..errors import SceneSamplingError
from ..logging_utils import block, get_logger
from .geometry import ArrayGeometry, RoomSpec, Vec3, absorption_from_t60
from .rir import calibrate_absorption

log = get_logger("simulate.scene")

ABSORPTION_MODELS = ("sabine", "calibrated")


@dataclass(frozen=True)
class SceneConstraints:
    area: Tuple[float, float] = (10.0, 100.0)
    aspect: Tuple[float, float] = (0.5, 2.0)
    height: Tuple[float, float] = (2.5, 4.0)
    t60: Tuple[float, float] = (0.2, 0.6)
    snr_point: Tuple[float, float] = (0.0, 15.0)
    snr_diffuse: Tuple[float, float] = (12.0, 35.0)
    noise_count: Tuple[int, int] = (1, 4)
    wall_margin: float = 0.5
    min_separation: float = 0.5
    array_radius: float = 0.05
    mic_count: int = 4
    attempts: int = 1000
    room_retries: int = 10
    absorption: str = "calibrated"

    def __post_init__(self):
        for name in ("area", "aspect", "height", "t60", "snr_point", "snr_diffuse", "noise_count"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name}: lower bound {lo} exceeds upper bound {hi}")
            cast = int if name == "noise_count" else float
            object.__setattr__(self, name, (cast(lo), cast(hi)))
        if self.noise_count[0] < 0:
            raise ValueError("noise_count must be non-negative")
        if self.absorption not in ABSORPTION_MODELS:
            raise ValueError(f"absorption must be one of {ABSORPTION_MODELS}, got {self.absorption!r}")
        if self.attempts < 1 or self.room_retries < 1:
            raise ValueError("attempts and room_retries must be >= 1")

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}


@dataclass(frozen=True)
class SceneSpec:
    room: RoomSpec
    array: ArrayGeometry
    target_pos: Vec3
    noise_positions: Tuple[Vec3, ...]
    snr_point: Tuple[float, ...]
    snr_diffuse: float
    rng_seed: int
    absorption_model: str = "calibrated"

    def __post_init__(self):
        object.__setattr__(self, "target_pos", tuple(float(v) for v in self.target_pos))
        object.__setattr__(self, "noise_positions",
                           tuple(tuple(float(v) for v in p) for p in self.noise_positions))
        object.__setattr__(self, "snr_point", tuple(float(s) for s in self.snr_point))
        if len(self.snr_point) != len(self.noise_positions):
            raise ValueError("one point-noise SNR per noise position is required")

    @property
    def num_noises(self) -> int:
        return len(self.noise_positions)

    def points(self) -> np.ndarray:
        """Array center, target, then noises: the positions that must stay apart."""
        return np.array([self.array.center, self.target_pos, *self.noise_positions])

    def to_dict(self) -> dict:
        return {
            "room": self.room.to_dict(),
            "array": self.array.to_dict(),
            "target_pos": list(self.target_pos),
            "noise_positions": [list(p) for p in self.noise_positions],
            "snr_point": list(self.snr_point),
            "snr_diffuse": self.snr_diffuse,
            "rng_seed": int(self.rng_seed),
            "absorption_model": self.absorption_model,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        room = d["room"]
        arr = d["array"]
        return cls(
            room=RoomSpec(tuple(room["dims"]), room["t60"], room["absorption"], room.get("c", 343.0)),
            array=ArrayGeometry(tuple(arr["center"]), arr["yaw"], arr["radius"], arr["mic_count"]),
            target_pos=tuple(d["target_pos"]),
            noise_positions=tuple(tuple(p) for p in d["noise_positions"]),
            snr_point=tuple(d["snr_point"]),
            snr_diffuse=float(d["snr_diffuse"]),
            rng_seed=int(d["rng_seed"]),
            absorption_model=d.get("absorption_model", "sabine"),
        )


class _Exhausted(Exception):
    pass


def _sample_room(rng: np.random.Generator, c: SceneConstraints) -> Tuple[Vec3, float]:
    area = rng.uniform(*c.area)
    aspect = rng.uniform(*c.aspect)
    lz = rng.uniform(*c.height)
    t60 = rng.uniform(*c.t60)
    lx = float(np.sqrt(area * aspect))
    return (lx, float(area / lx), float(lz)), float(t60)


def _draw(rng, sampler, ok, attempts: int):
    for _ in range(attempts):
        p = sampler()
        if ok(p):
            return p
    raise _Exhausted


def _place(rng: np.random.Generator, dims: Vec3, c: SceneConstraints, n_noises: int):
    lx, ly, lz = dims
    m, r = c.wall_margin, c.array_radius
    if lx <= 2 * (m + r) or ly <= 2 * (m + r) or lz <= 2 * m:
        raise _Exhausted
    yaw = float(rng.uniform(0.0, 2.0 * np.pi))
    center = (
        float(rng.uniform(m + r, lx - m - r)),
        float(rng.uniform(m + r, ly - m - r)),
        float(rng.uniform(m, lz - m)),
    )
    placed = [np.asarray(center)]

    def sampler():
        return rng.uniform([m, m, m], [lx - m, ly - m, lz - m])

    def apart(p):
        return all(np.linalg.norm(p - q) >= c.min_separation for q in placed)

    target = _draw(rng, sampler, apart, c.attempts)
    placed.append(target)
    noises = []
    for _ in range(n_noises):
        p = _draw(rng, sampler, apart, c.attempts)
        placed.append(p)
        noises.append(tuple(float(v) for v in p))
    return yaw, center, tuple(float(v) for v in target), tuple(noises)


def sample_scene(seed: int, constraints: Optional[SceneConstraints] = None, fs: int = 16000,
                 max_order: Optional[int] = None) -> SceneSpec:
    """
    Draw a scene from `seed`. Positions use rejection sampling (`attempts` draws per
    point); a room that cannot host them is redrawn up to `room_retries` times.
    With calibrated absorption, alpha is fitted on the target-to-mic-0 response
    rendered at `max_order`, the same response the mixer measures.
    """
    c = constraints or SceneConstraints()
    rng = np.random.default_rng(seed)
    for retry in range(c.room_retries):
        dims, t60 = _sample_room(rng, c)
        n_noises = int(rng.integers(c.noise_count[0], c.noise_count[1] + 1))
        try:
            yaw, center, target, noises = _place(rng, dims, c, n_noises)
        except _Exhausted:
            log.warning("\n" + block("ROOM RESAMPLED", seed=seed, retry=retry + 1, dims=dims))
            continue
        snr_point = tuple(float(s) for s in rng.uniform(*c.snr_point, size=n_noises))
        snr_diffuse = float(rng.uniform(*c.snr_diffuse))
        array = ArrayGeometry(center, yaw, c.array_radius, c.mic_count)
        room = RoomSpec(dims, t60, absorption_from_t60(dims, t60))
        if c.absorption == "calibrated":
            alpha = calibrate_absorption(room, target, array.positions[0], fs, max_order)
            room = RoomSpec(dims, t60, alpha)
        return SceneSpec(room, array, target, noises, snr_point, snr_diffuse, int(seed), c.absorption)
    raise SceneSamplingError(
        f"could not place sources in {c.room_retries} rooms for seed {seed} "
        f"({c.attempts} attempts per position)"
    )


def utterance_seed(master_seed: int, index: int) -> int:
    """Independent 64-bit stream per utterance, identical in serial and parallel runs."""
    ss = np.random.SeedSequence(master_seed, spawn_key=(index,))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def check_scene(scene: SceneSpec, constraints: Optional[SceneConstraints] = None,
                tol: float = 1e-9) -> Sequence[str]:
    """Human-readable list of violated range constraints (empty when the scene is valid)."""
    c = constraints or SceneConstraints()
    issues = []
    room = scene.room

    def within(name, value, bounds):
        if not bounds[0] - tol <= value <= bounds[1] + tol:
            issues.append(f"{name}={value:.4g} outside {bounds}")

    within("area", room.area, c.area)
    within("height", room.dims[2], c.height)
    within("t60", room.t60, c.t60)
    within("snr_diffuse", scene.snr_diffuse, c.snr_diffuse)
    for s in scene.snr_point:
        within("snr_point", s, c.snr_point)
    if not c.noise_count[0] <= scene.num_noises <= c.noise_count[1]:
        issues.append(f"{scene.num_noises} noises outside {c.noise_count}")
    pts = scene.points()
    for i, p in enumerate(pts):
        if room.wall_distance(p) < c.wall_margin - tol:
            issues.append(f"point {i} closer than {c.wall_margin} m to a wall")
        for j in range(i + 1, len(pts)):
            if np.linalg.norm(p - pts[j]) < c.min_separation - tol:
                issues.append(f"points {i} and {j} closer than {c.min_separation} m")
    for k, mic in enumerate(scene.array.positions):
        if room.wall_distance(mic) < c.wall_margin - tol:
            issues.append(f"mic {k} closer than {c.wall_margin} m to a wall")
    return issues
