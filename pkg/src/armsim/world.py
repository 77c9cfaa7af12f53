"""Moving cylindrical obstacles: spawning, motion, bounded-noise sensing and prediction."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry_sets import DisturbanceBounds


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 (O'Neill, XSL-RR 128/64) seeded from a u64; the stream is platform independent."""
    return np.random.Generator(np.random.PCG64(int(seed)))


@dataclass(frozen=True)
class Obstacle:
    p0: tuple[float, float]
    speed: float
    heading: float
    height: float
    radius: float = 0.3
    spawn_time: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "p0", (float(self.p0[0]), float(self.p0[1])))
        if self.speed < 0:
            raise ValueError("obstacle speed must be non-negative")
        if not self.height > 0 or not self.radius > 0:
            raise ValueError("obstacle height and radius must be positive")


@dataclass(frozen=True)
class SpawnConfig:
    R_detect: float = 10.0
    speed_range: tuple[float, float] = (0.3, 0.8)
    height_range: tuple[float, float] = (2.8, 4.4)
    radius: float = 0.3
    heading_spread: float = math.pi / 4


@dataclass(frozen=True)
class Measurement:
    position: tuple[float, float]
    speed: float
    heading: float
    height: float
    stamp: float
    radius: float = 0.3
    ident: int | None = None  # track id, lets a consumer fuse repeated readings


@dataclass(frozen=True)
class PredictedPath:
    positions: np.ndarray  # (Np, 2)
    heights: np.ndarray  # (Np,)
    stamps: np.ndarray  # (Np,)
    radius: float = 0.3


def spawn_obstacle(rng: np.random.Generator, cfg: SpawnConfig, spawn_time: float = 0.0) -> Obstacle:
    """Obstacle on the detection circle heading into the disc.

    Draw order is fixed (bearing, heading offset, speed, height) so streams are reproducible.
    """
    bearing = rng.uniform(-math.pi, math.pi)
    offset = rng.uniform(-cfg.heading_spread, cfg.heading_spread)
    speed = _uniform(rng, *cfg.speed_range)
    height = _uniform(rng, *cfg.height_range)
    p0 = (cfg.R_detect * math.cos(bearing), cfg.R_detect * math.sin(bearing))
    return Obstacle(p0, speed, bearing + math.pi + offset, height, cfg.radius, spawn_time)


def _uniform(rng, lo, hi):
    # the draw is consumed even for a degenerate range so streams do not shift
    v = rng.uniform(lo, hi)
    return float(lo) if lo == hi else float(v)


def true_position(obs: Obstacle, t: float) -> np.ndarray:
    if t < obs.spawn_time:
        raise ValueError("obstacle has not spawned yet")
    s = obs.speed * (t - obs.spawn_time)
    return np.array([obs.p0[0] + s * math.cos(obs.heading), obs.p0[1] + s * math.sin(obs.heading)])


def measure(obs: Obstacle, t: float, rng: np.random.Generator, bounds: DisturbanceBounds,
            ident: int | None = None) -> Measurement:
    """Exact position; speed and height carry uniform noise within the bounds."""
    w_v = rng.uniform(-bounds.delta_v, bounds.delta_v)
    w_z = rng.uniform(-bounds.delta_z, bounds.delta_z)
    p = true_position(obs, t)
    # clipping at zero speed only shrinks the error
    return Measurement((float(p[0]), float(p[1])), max(0.0, obs.speed + w_v), obs.heading,
                       obs.height + w_z, t, obs.radius, ident)


def predict_path(m: Measurement, Np: int, dt: float) -> PredictedPath:
    """Constant-velocity extrapolation at ``t + i*dt`` for ``i = 1..Np``."""
    if Np < 1:
        raise ValueError("Np must be at least 1")
    i = np.arange(1, Np + 1, dtype=float)
    direction = np.array([math.cos(m.heading), math.sin(m.heading)])
    positions = np.asarray(m.position) + (m.speed * dt * i)[:, None] * direction
    return PredictedPath(positions, np.full(Np, m.height), m.stamp + dt * i, m.radius)


def interfering_floor(paths, R_arm: float, z_min: float, Np: int) -> np.ndarray:
    """Per-step floor: tallest obstacle whose predicted footprint overlaps the reach disc."""
    floor = np.full(Np, float(z_min))
    for path in paths:
        inside = np.hypot(path.positions[:Np, 0], path.positions[:Np, 1]) <= R_arm + path.radius
        floor = np.where(inside, np.maximum(floor, path.heights[:Np]), floor)
    return floor


def observed(obs: Obstacle, t: float, R_detect: float) -> bool:
    """Spawned, and inside the sensing disc."""
    if t < obs.spawn_time:
        return False
    return bool(np.hypot(*true_position(obs, t)) <= R_detect + 1e-9)
