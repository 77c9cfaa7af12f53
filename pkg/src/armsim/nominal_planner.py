"""Phase-based pick-and-place reference: a cyclic list of joint-space waypoints
tracked with a saturated proportional law."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import least_squares

from .arm_model import ArmGeometry, ControlInput, InputLimits, JointLimits, JointState, clamp_input, radial_height

DEFAULT_GAIN = 2.0
DEFAULT_TOL = 0.02


@dataclass(frozen=True)
class Phase:
    name: str
    target: JointState
    dwell: float = 0.0
    rate_scale: float = 1.0
    # a via phase is also done once theta is on target and the tip is at least as high as
    # the target pose, so a detour over an obstacle still counts as passing the waypoint
    via: bool = False

    def __post_init__(self):
        if self.dwell < 0:
            raise ValueError("dwell must be non-negative")
        if not 0 < self.rate_scale <= 1:
            raise ValueError("rate_scale must lie in (0, 1]")


@dataclass(frozen=True)
class PhasePlan:
    phases: tuple[Phase, ...]
    gain: float = DEFAULT_GAIN
    tol: float = DEFAULT_TOL
    geometry: ArmGeometry = ArmGeometry()

    def __post_init__(self):
        object.__setattr__(self, "phases", tuple(self.phases))
        if not self.phases:
            raise ValueError("a plan needs at least one phase")
        if self.gain <= 0 or self.tol <= 0:
            raise ValueError("gain and tolerance must be positive")

    def __len__(self):
        return len(self.phases)


@dataclass(frozen=True)
class PhaseProgress:
    index: int = 0
    dwell_remaining: float = 0.0
    cycles: int = 0

    @classmethod
    def start(cls, plan: PhasePlan) -> "PhaseProgress":
        return cls(0, plan.phases[0].dwell, 0)


def nominal_control(state: JointState, progress: PhaseProgress, plan: PhasePlan, limits: InputLimits,
                    dt: float) -> tuple[ControlInput, PhaseProgress]:
    phase = plan.phases[progress.index]
    err = phase.target.as_array() - state.as_array()
    arrived = np.max(np.abs(err)) < plan.tol or (phase.via and _passed(state, phase, plan))
    # once the target has been reached the dwell clock keeps running even if an avoidance
    # manoeuvre has since moved the arm off the pose
    started = progress.dwell_remaining < phase.dwell - 1e-12
    if arrived or started:
        if progress.dwell_remaining > 1e-9:
            u = ControlInput.zero() if arrived else _track(err, phase, plan, limits)
            return u, replace(progress, dwell_remaining=max(0.0, progress.dwell_remaining - dt))
        nxt = progress.index + 1
        cycles = progress.cycles
        if nxt == len(plan):
            nxt, cycles = 0, cycles + 1
        return ControlInput.zero(), PhaseProgress(nxt, plan.phases[nxt].dwell, cycles)
    return _track(err, phase, plan, limits), progress


def _track(err, phase: Phase, plan: PhasePlan, limits: InputLimits) -> ControlInput:
    u = clamp_input(ControlInput.from_array(plan.gain * err), limits)
    return ControlInput.from_array(phase.rate_scale * u.as_array())


def _passed(state: JointState, phase: Phase, plan: PhasePlan) -> bool:
    if abs(phase.target.theta - state.theta) >= plan.tol:
        return False
    _, z = radial_height(state.as_array(), plan.geometry)
    _, z_target = radial_height(phase.target.as_array(), plan.geometry)
    return float(z) >= float(z_target) - plan.tol


def nominal_rollout(state: JointState, progress: PhaseProgress, plan: PhasePlan, limits: InputLimits,
                    dt: float, steps: int) -> np.ndarray:
    """Rates the nominal law would command over the next ``steps`` steps, open loop."""
    out = np.zeros((steps, 4))
    q = state.as_array()
    for k in range(steps):
        u, progress = nominal_control(JointState.from_array(q), progress, plan, limits, dt)
        out[k] = u.as_array()
        q = q + out[k] * dt
    return out


def joint_target(r: float, z: float, theta: float, gamma: float, geom: ArmGeometry,
                 limits: JointLimits | None = None) -> JointState:
    """Joint angles that put the end-effector at in-plane radius ``r`` and height ``z``
    with the last link at a chosen ``gamma``."""
    limits = limits or JointLimits()

    def resid(ab):
        rr, zz = radial_height(np.array([ab[0], ab[1], gamma]), geom)
        return [rr - r, zz - z]

    lo, hi = limits.lower[:2], limits.upper[:2]
    sol = least_squares(resid, x0=[-0.3, 0.3], bounds=(lo, hi), xtol=1e-14, ftol=1e-14, gtol=1e-14)
    if np.max(np.abs(sol.fun)) > 1e-9:
        raise ValueError(f"pose r={r}, z={z} unreachable with gamma={gamma}")
    return JointState(float(sol.x[0]), float(sol.x[1]), gamma, theta)


def default_plan(geom: ArmGeometry | None = None) -> PhasePlan:
    """Pick at azimuth -60 deg, place at +60 deg, both on a 1.6 m bench at 4 m radius."""
    geom = geom or ArmGeometry()
    pick, place = -math.pi / 3, math.pi / 3
    low = dict(r=4.0, z=1.6, gamma=0.3)
    high = dict(r=3.5, z=3.2, gamma=1.0)
    t = lambda p, th: joint_target(p["r"], p["z"], th, p["gamma"], geom)  # noqa: E731
    return PhasePlan((
        Phase("HOME", t(high, 0.0), via=True),
        Phase("PICK_DESCEND", t(low, pick)),
        Phase("GRASP", t(low, pick), dwell=0.5),
        Phase("LIFT", t(high, pick), via=True),
        Phase("ROTATE", t(high, place), via=True),
        Phase("PLACE_DESCEND", t(low, place)),
        Phase("RELEASE", t(low, place), dwell=0.5),
    ), geometry=geom)


@dataclass
class PlanReport:
    valid: bool
    violations: list = field(default_factory=list)


def validate_plan(plan: PhasePlan, scenario, grid=None, samples: int = 10) -> PlanReport:
    """Check targets and straight joint-space segments between them against the robust set.

    With ``grid`` (rows from ``invariant_grid``) each sample is looked up at its nearest
    grid node; without it membership is decided directly at each sample.
    """
    from .geometry_sets import (DisturbanceBounds3, robust_feasible_membership, tighten_workspace)

    sc = scenario
    report = PlanReport(True)
    for ph in plan.phases:
        if not sc.joint_limits.contains(ph.target):
            report.violations.append((ph.name, ph.target.as_tuple(), "outside joint limits"))
    if report.violations:
        report.valid = False
        return report

    if grid is not None:
        nodes = np.array([row[:4] for row in grid], dtype=float)
        member = [row[4] for row in grid]

        def is_member(q):
            i = int(np.argmin(np.sum((nodes - q) ** 2, axis=1)))
            return member[i] == 1
    else:
        Np = sc.rmpc.Np
        dist = DisturbanceBounds3.from_bounds(sc.disturbance, sc.dt)
        tw = tighten_workspace(sc.workspace, dist, np.full(Np, sc.workspace.z_min), Np, sc.dt,
                               sc.rmpc.tightening_mode)

        def is_member(q):
            m = robust_feasible_membership(JointState.from_array(q), Np, sc.geometry, sc.joint_limits,
                                           sc.input_limits, tw, sc.dt)
            return m.member is True

    targets = [ph.target.as_array() for ph in plan.phases]
    for i, a in enumerate(targets):
        b = targets[(i + 1) % len(targets)]
        for s in np.linspace(0.0, 1.0, samples, endpoint=False):
            q = a + s * (b - a)
            if not is_member(q):
                report.violations.append((plan.phases[i].name, tuple(q), "not robustly feasible"))
    report.valid = not report.violations
    return report


def cycle_time_bound(plan: PhasePlan, limits: InputLimits, dt: float) -> float:
    """Upper bound on one unobstructed cycle.

    Per phase: saturated travel of the largest joint error at the slowest scaled rate,
    then the exponential tail of the proportional law down to the tolerance, plus dwell
    and two bookkeeping steps.
    """
    rate = min(min(-lo, hi) for lo, hi in zip(limits.lower, limits.upper))
    total = 0.0
    targets = [p.target.as_array() for p in plan.phases]
    for i, ph in enumerate(plan.phases):
        prev = targets[i - 1]
        err = float(np.max(np.abs(targets[i] - prev)))
        v = rate * ph.rate_scale
        sat = max(0.0, err - v / plan.gain) / v if v > 0 else 0.0
        decay = 1.0 - plan.gain * ph.rate_scale * dt
        tail = math.ceil(math.log(plan.tol / max(v / plan.gain, plan.tol)) / math.log(decay)) * dt if decay > 0 else dt
        total += sat + tail + ph.dwell + 3 * dt
    return total
