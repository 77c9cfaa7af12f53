"""Workspace sets, disturbance bounds and their Pontryagin-difference tightening."""
from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .arm_model import ArmGeometry, InputLimits, JointLimits, JointState

TIGHTENING_MODES = ("constant", "growing")


class EmptyTighteningError(ValueError):
    """The eroded workspace is empty at some prediction step."""


@dataclass(frozen=True)
class WorkspaceSet:
    R_arm: float = 7.0
    z_min: float = 0.5
    z_max: float = 6.0

    def __post_init__(self):
        if not self.R_arm > 0:
            raise ValueError("R_arm must be positive")
        if not self.z_min < self.z_max:
            raise ValueError("z_min must be below z_max")

    def contains(self, p, tol: float = 0.0) -> bool:
        x, y, z = p
        return (x * x + y * y <= self.R_arm ** 2 + tol
                and self.z_min - tol <= z <= self.z_max + tol)


@dataclass(frozen=True)
class DisturbanceBounds:
    delta_v: float = 0.0
    delta_z: float = 0.0

    def __post_init__(self):
        if self.delta_v < 0 or self.delta_z < 0:
            raise ValueError("disturbance bounds must be non-negative")


@dataclass(frozen=True)
class DisturbanceBounds3:
    """Bounds of the task-space disturbance set (radial, velocity, height).

    The radial bound is derived from the velocity bound, so both are carried.
    """

    delta_r: float
    delta_v: float
    delta_z: float

    def __post_init__(self):
        if min(self.delta_r, self.delta_v, self.delta_z) < 0:
            raise ValueError("disturbance bounds must be non-negative")

    @classmethod
    def from_bounds(cls, bounds: DisturbanceBounds, dt: float) -> "DisturbanceBounds3":
        return cls(radial_displacement(bounds.delta_v, dt), bounds.delta_v, bounds.delta_z)

    def vertices(self):
        """The 8 corner points (w_r, w_v, w_z) of the box."""
        return [np.array(v) for v in itertools.product((-self.delta_r, self.delta_r),
                                                      (-self.delta_v, self.delta_v),
                                                      (-self.delta_z, self.delta_z))]


def radial_displacement(delta_v: float, dt: float) -> float:
    if delta_v < 0 or not dt > 0:
        raise ValueError("need delta_v >= 0 and dt > 0")
    return delta_v * dt


@dataclass(frozen=True)
class Interval:
    lo: float = 0.0
    hi: float = -1.0

    @property
    def empty(self) -> bool:
        return self.lo > self.hi

    @classmethod
    def empty_interval(cls) -> "Interval":
        return cls(math.inf, -math.inf)

    def __contains__(self, x) -> bool:
        return self.lo <= x <= self.hi


def pontryagin_diff_interval(a: Interval, b: Interval) -> Interval:
    """Erosion ``a ⊖ b = {x : x + w ∈ a for all w ∈ b}`` of one interval by another."""
    if a.empty or b.empty:
        return Interval.empty_interval()
    lo, hi = a.lo - b.lo, a.hi - b.hi
    if hi < lo:
        return Interval.empty_interval()
    return Interval(lo, hi)


@dataclass(frozen=True)
class TightenedWorkspace:
    radial: np.ndarray  # R_k
    zfloor: np.ndarray  # zfloor_k, before slack
    z_max: float

    @property
    def horizon(self) -> int:
        return len(self.radial)

    def contains(self, k: int, p, slack: float = 0.0, tol: float = 0.0) -> bool:
        x, y, z = p
        return (x * x + y * y <= self.radial[k] ** 2 + tol
                and z >= self.zfloor[k] - slack - tol
                and z <= self.z_max + tol)

    def is_empty(self) -> bool:
        return bool(np.any(self.radial <= 0) or np.any(self.zfloor >= self.z_max))


def tighten_workspace(nominal: WorkspaceSet, dist: DisturbanceBounds3, zfloor_dynamic, Np: int,
                      dt: float, mode: str = "growing") -> TightenedWorkspace:
    """Erode the workspace by the disturbance box at every prediction step.

    ``growing`` removes ``k * delta_r`` of radius at step ``k`` (errors accumulate along
    the prediction); ``constant`` removes a single ``delta_r`` at every step.
    """
    if mode not in TIGHTENING_MODES:
        raise ValueError(f"unknown tightening mode {mode!r}")
    if not dt > 0 or Np < 1:
        raise ValueError("need dt > 0 and Np >= 1")
    floor = np.asarray(zfloor_dynamic, dtype=float)
    if floor.shape != (Np,):
        raise ValueError(f"zfloor_dynamic must have {Np} entries")
    if np.any(floor < nominal.z_min):
        raise ValueError("dynamic floor may not drop below z_min")
    k = np.arange(Np, dtype=float)
    shrink = k * dist.delta_r if mode == "growing" else np.full(Np, dist.delta_r)
    # erosion of [0, R] by [-dr, dr] and of [floor, z_max] by [-dz, dz] (upper side untouched)
    radial = np.array([pontryagin_diff_interval(Interval(0.0, nominal.R_arm), Interval(-s, s)).hi
                       if s <= nominal.R_arm else 0.0 for s in shrink])
    radial = np.maximum(radial, 0.0)
    zfloor = floor + dist.delta_z
    tw = TightenedWorkspace(radial, zfloor, nominal.z_max)
    if tw.is_empty():
        raise EmptyTighteningError(
            f"eroded workspace is empty (min radius {radial.min():.3f}, max floor {zfloor.max():.3f}, "
            f"ceiling {nominal.z_max:.3f})")
    return tw


def untightened(nominal: WorkspaceSet, Np: int) -> TightenedWorkspace:
    return TightenedWorkspace(np.full(Np, nominal.R_arm), np.full(Np, nominal.z_min), nominal.z_max)


@dataclass
class Membership:
    member: bool | None  # None means the solver could not decide
    witness: np.ndarray | None = None
    status: str = ""


def robust_feasible_membership(x: JointState, horizon: int, geom: ArmGeometry, joint_limits: JointLimits,
                               input_limits: InputLimits, tightened: TightenedWorkspace, dt: float,
                               eps_max: float = 0.0, options=None) -> Membership:
    """Decide whether some admissible input sequence keeps every predicted end-effector
    position inside the eroded workspace.

    ``eps_max`` > 0 admits the same softened floor the controller uses.  Returns
    ``member=None`` when the solver stops without either a feasible point or a proof
    of infeasibility.
    """
    from .rmpc_controller import CostWeights, RmpcProblem, solve_rmpc

    if not joint_limits.contains(x):
        return Membership(False, status="state outside joint limits")
    if tightened.horizon < horizon or tightened.is_empty():
        return Membership(False, status="empty tightened set")
    tw = TightenedWorkspace(tightened.radial[:horizon], tightened.zfloor[:horizon], tightened.z_max)
    # feasibility only: slack is the sole cost so the solver hunts for a constraint-satisfying point
    problem = RmpcProblem(x, horizon, dt, geom, joint_limits, input_limits, tw,
                          CostWeights(0.0, 0.0, 0.0, 1.0), eps_max=max(eps_max, 1e-9))
    sol = solve_rmpc(problem, options=options)
    if sol.status == "infeasible":
        return Membership(False, status=sol.status)
    if sol.status != "converged":
        return Membership(None, sol.controls, status=sol.status)
    return Membership(True, sol.controls, status=sol.status)


def invariant_grid(scenario, resolution: int = 9, zfloor: float | None = None):
    """Evaluate robust membership over a regular grid in joint space.

    Returns a list of ``(alpha, beta, gamma, theta, member)`` rows with member in
    ``{1, 0, "unknown"}``.  ``zfloor`` optionally raises the floor to a worst-case
    obstacle height for the whole horizon.
    """
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    sc = scenario
    Np = sc.rmpc.Np
    dist = DisturbanceBounds3.from_bounds(sc.disturbance, sc.dt)
    floor = np.full(Np, sc.workspace.z_min if zfloor is None else max(zfloor, sc.workspace.z_min))
    tw = tighten_workspace(sc.workspace, dist, floor, Np, sc.dt, sc.rmpc.tightening_mode)
    axes = [np.linspace(lo, hi, resolution) for lo, hi in zip(sc.joint_limits.lower, sc.joint_limits.upper)]
    # theta enters neither radius nor height: evaluate once per (alpha, beta, gamma)
    rows = []
    cache = {}
    for a, b, g, th in itertools.product(*axes):
        key = (a, b, g)
        if key not in cache:
            m = robust_feasible_membership(JointState(a, b, g, 0.0), Np, sc.geometry, sc.joint_limits,
                                           sc.input_limits, tw, sc.dt)
            cache[key] = "unknown" if m.member is None else int(m.member)
        rows.append((float(a), float(b), float(g), float(th), cache[key]))
    return rows


def write_grid_csv(rows, path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["alpha", "beta", "gamma", "theta", "member"])
        for a, b, g, th, m in rows:
            w.writerow([repr(a), repr(b), repr(g), repr(th), m])
