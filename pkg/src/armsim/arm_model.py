"""Kinematics, Euler dynamics and box constraints of the 4-DOF arm.

Angle convention: ``alpha`` tilts the first link away from vertical, ``beta``
elevates the second link above horizontal, ``gamma`` swings the third link up
from hanging straight down, and ``theta`` rotates the whole arm about the
vertical axis through the base.  The arm always lies in the vertical plane at
azimuth ``theta``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

AXES = ("alpha", "beta", "gamma", "theta")
RATE_AXES = ("d_alpha", "d_beta", "d_gamma", "d_theta")


@dataclass(frozen=True)
class ArmGeometry:
    L1: float = 3.0
    L2: float = 2.5
    L3: float = 1.0

    def __post_init__(self):
        for name in ("L1", "L2", "L3"):
            if not getattr(self, name) > 0:
                raise ValueError(f"link length {name} must be positive")

    @property
    def reach(self) -> float:
        return self.L1 + self.L2 + self.L3


@dataclass(frozen=True)
class JointState:
    alpha: float = 0.0
    beta: float = 0.0
    gamma: float = 0.0
    theta: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in self.as_tuple()):
            raise ValueError(f"non-finite joint state {self.as_tuple()}")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.alpha, self.beta, self.gamma, self.theta)

    def as_array(self) -> np.ndarray:
        return np.array(self.as_tuple(), dtype=float)

    @classmethod
    def from_array(cls, a) -> "JointState":
        return cls(*(float(v) for v in a))


@dataclass(frozen=True)
class ControlInput:
    d_alpha: float = 0.0
    d_beta: float = 0.0
    d_gamma: float = 0.0
    d_theta: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in self.as_tuple()):
            raise ValueError(f"non-finite control input {self.as_tuple()}")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.d_alpha, self.d_beta, self.d_gamma, self.d_theta)

    def as_array(self) -> np.ndarray:
        return np.array(self.as_tuple(), dtype=float)

    @classmethod
    def from_array(cls, a) -> "ControlInput":
        return cls(*(float(v) for v in a))

    @classmethod
    def zero(cls) -> "ControlInput":
        return cls()


def _check_box(lower, upper, what):
    if len(lower) != 4 or len(upper) != 4:
        raise ValueError(f"{what} needs four lower and four upper bounds")
    if any(lo > hi for lo, hi in zip(lower, upper)):
        raise ValueError(f"{what}: lower bound exceeds upper bound")


@dataclass(frozen=True)
class JointLimits:
    lower: tuple[float, ...] = (-math.pi / 2, -math.pi / 2, -math.pi / 2, -math.pi)
    upper: tuple[float, ...] = (math.pi / 2, math.pi / 2, math.pi / 2, math.pi)

    def __post_init__(self):
        object.__setattr__(self, "lower", tuple(float(v) for v in self.lower))
        object.__setattr__(self, "upper", tuple(float(v) for v in self.upper))
        _check_box(self.lower, self.upper, "JointLimits")

    def contains(self, state: JointState) -> bool:
        return not np.any(check_limits(state, self))


@dataclass(frozen=True)
class InputLimits:
    lower: tuple[float, ...] = (-1.0, -1.0, -1.0, -1.0)
    upper: tuple[float, ...] = (1.0, 1.0, 1.0, 1.0)

    def __post_init__(self):
        object.__setattr__(self, "lower", tuple(float(v) for v in self.lower))
        object.__setattr__(self, "upper", tuple(float(v) for v in self.upper))
        _check_box(self.lower, self.upper, "InputLimits")
        if any(lo > 0 or hi < 0 for lo, hi in zip(self.lower, self.upper)):
            raise ValueError("InputLimits must contain zero on every axis")

    @classmethod
    def symmetric(cls, rate: float) -> "InputLimits":
        return cls((-rate,) * 4, (rate,) * 4)

    def contains(self, u: ControlInput, tol: float = 0.0) -> bool:
        a = u.as_array()
        return bool(np.all(a >= np.array(self.lower) - tol) and np.all(a <= np.array(self.upper) + tol))


@dataclass(frozen=True)
class CartesianPoints:
    p2: np.ndarray = field(repr=True)
    p3: np.ndarray = field(repr=True)
    p4: np.ndarray = field(repr=True)


def fk_points(state: JointState, geom: ArmGeometry) -> CartesianPoints:
    """Positions of the three link end points (P2, P3 and the end-effector P4)."""
    a, b, g, th = state.as_tuple()
    ct, st = math.cos(th), math.sin(th)
    p2 = np.array([-geom.L1 * math.sin(a) * ct, -geom.L1 * math.sin(a) * st, geom.L1 * math.cos(a)])
    p3 = p2 + np.array([geom.L2 * math.cos(b) * ct, geom.L2 * math.cos(b) * st, geom.L2 * math.sin(b)])
    p4 = p3 + np.array([geom.L3 * math.sin(g) * ct, geom.L3 * math.sin(g) * st, -geom.L3 * math.cos(g)])
    return CartesianPoints(p2, p3, p4)


def end_effector(state: JointState, geom: ArmGeometry) -> np.ndarray:
    return fk_points(state, geom).p4


def radial_height(q: np.ndarray, geom: ArmGeometry) -> tuple[np.ndarray, np.ndarray]:
    """Signed in-plane radius and height of P4 for an array of joint vectors.

    ``q[..., 0:3]`` holds (alpha, beta, gamma); theta does not enter either value.
    """
    q = np.asarray(q, dtype=float)
    a, b, g = q[..., 0], q[..., 1], q[..., 2]
    r = -geom.L1 * np.sin(a) + geom.L2 * np.cos(b) + geom.L3 * np.sin(g)
    z = geom.L1 * np.cos(a) + geom.L2 * np.sin(b) - geom.L3 * np.cos(g)
    return r, z


def radial_height_jacobian(q: np.ndarray, geom: ArmGeometry) -> tuple[np.ndarray, np.ndarray]:
    """Partial derivatives of (r, z) with respect to (alpha, beta, gamma), shape (..., 3) each."""
    q = np.asarray(q, dtype=float)
    a, b, g = q[..., 0], q[..., 1], q[..., 2]
    dr = np.stack([-geom.L1 * np.cos(a), -geom.L2 * np.sin(b), geom.L3 * np.cos(g)], axis=-1)
    dz = np.stack([-geom.L1 * np.sin(a), geom.L2 * np.cos(b), geom.L3 * np.sin(g)], axis=-1)
    return dr, dz


def fk_jacobian(state: JointState, geom: ArmGeometry) -> np.ndarray:
    """3x4 Jacobian of the end-effector position with respect to (alpha, beta, gamma, theta)."""
    q = state.as_array()
    r, _ = radial_height(q, geom)
    dr, dz = radial_height_jacobian(q, geom)
    ct, st = math.cos(state.theta), math.sin(state.theta)
    jac = np.zeros((3, 4))
    jac[0, :3] = dr * ct
    jac[1, :3] = dr * st
    jac[2, :3] = dz
    jac[0, 3] = -r * st
    jac[1, 3] = r * ct
    return jac


def step(state: JointState, u: ControlInput, dt: float) -> JointState:
    """One forward-Euler step; no clamping."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    return JointState.from_array(state.as_array() + u.as_array() * dt)


def rollout(q0: np.ndarray, controls: np.ndarray, dt: float) -> np.ndarray:
    """Euler rollout of an (N, 4) control array; returns (N + 1, 4) states.

    Accumulates sequentially so the result matches repeated :func:`step` calls bit for bit.
    """
    controls = np.asarray(controls, dtype=float)
    out = np.empty((len(controls) + 1, 4))
    out[0] = q0
    for k, u in enumerate(controls):
        out[k + 1] = out[k] + u * dt
    return out


def check_limits(state: JointState, limits: JointLimits) -> np.ndarray:
    """Signed per-axis excess beyond the violated bound (negative below, positive above)."""
    q = state.as_array()
    lo, hi = np.array(limits.lower), np.array(limits.upper)
    return np.where(q > hi, q - hi, np.where(q < lo, q - lo, 0.0))


def clamp_input(u: ControlInput, limits: InputLimits) -> ControlInput:
    return ControlInput.from_array(np.clip(u.as_array(), limits.lower, limits.upper))
