"""Distance-region comparison controller: full speed far away, slowed and deflected
in the active band, stopped inside the critical radius."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .arm_model import ControlInput, JointState, clamp_input, end_effector
from .nominal_planner import PhaseProgress, nominal_control

SAFE, ACTIVE, CRITICAL = "safe", "active", "critical"


class DegenerateSeparation(ValueError):
    """Robot and obstacle points coincide; the repulsive field is undefined there."""


@dataclass(frozen=True)
class BaselineConfig:
    R2: float = 3.0
    R3: float = 1.5
    k: float = 1.0
    v_nominal: float = 1.0

    def __post_init__(self):
        if not self.R2 > self.R3 > 0:
            raise ValueError("need R2 > R3 > 0")
        if not self.k > 0:
            raise ValueError("k must be positive")
        if not 0 < self.v_nominal <= 1:
            raise ValueError("v_nominal must lie in (0, 1]")


def region(d: float, cfg: BaselineConfig) -> str:
    if d > cfg.R2:
        return SAFE
    if d >= cfg.R3:
        return ACTIVE
    return CRITICAL


def repulsive_force(p_r, p_h, k: float) -> np.ndarray:
    """``-k (p_r - p_h) / |p_r - p_h|^3``, magnitude ``k / d^2``."""
    diff = np.asarray(p_r, dtype=float) - np.asarray(p_h, dtype=float)
    d = float(np.hypot(*diff))
    if d == 0.0:
        raise DegenerateSeparation("coincident robot and obstacle positions")
    return -k * diff / d ** 3


def speed_factor(d: float, cfg: BaselineConfig) -> float:
    reg = region(d, cfg)
    if reg == SAFE:
        return 1.0
    if reg == CRITICAL:
        return 0.0
    return (d - cfg.R3) / (cfg.R2 - cfg.R3)


def nearest(measurements, p4):
    """(surface distance, measurement) of the closest observed obstacle, or (inf, None)."""
    best, which = math.inf, None
    for m in measurements:
        d = max(0.0, math.hypot(m.position[0] - p4[0], m.position[1] - p4[1]) - m.radius)
        if d < best:
            best, which = d, m
    return best, which


def baseline_step(state: JointState, progress: PhaseProgress, measurements, sc):
    """Returns (input, new progress, region, distance, nominal input)."""
    cfg = sc.baseline
    u_nom, new_progress = nominal_control(state, progress, sc.plan, sc.input_limits, sc.dt)
    p4 = end_effector(state, sc.geometry)
    d, obs = nearest(measurements, p4)
    reg = region(d, cfg)
    if reg == CRITICAL:
        return ControlInput.zero(), new_progress, reg, d, u_nom.as_array()
    u = cfg.v_nominal * speed_factor(d, cfg) * u_nom.as_array()
    if reg == ACTIVE:
        try:
            f = repulsive_force(p4[:2], obs.position, cfg.k)
        except DegenerateSeparation:
            return ControlInput.zero(), new_progress, CRITICAL, d, u_nom.as_array()
        # the field as written points at the obstacle; steer the azimuth the other way
        tangent = np.array([-math.sin(state.theta), math.cos(state.theta)])
        radius = max(math.hypot(p4[0], p4[1]), 1.0)
        u[3] += -float(f @ tangent) / radius
    return clamp_input(ControlInput.from_array(u), sc.input_limits), new_progress, reg, d, u_nom.as_array()
