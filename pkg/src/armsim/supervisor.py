"""Mode switching between the nominal phase tracker and the robust MPC.

Every step the supervisor predicts obstacle paths, takes the smallest predicted
planar clearance to the current end-effector position, and moves through
Nominal -> Rmpc -> Blending -> Nominal with a hysteresis band and a linear input
blend on the way back.  Repeated readings of the same obstacle are fused first,
so sensor noise does not make the floor flicker from one step to the next.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .arm_model import ControlInput, JointState, clamp_input, end_effector, rollout
from .geometry_sets import DisturbanceBounds3, EmptyTighteningError, tighten_workspace
from .nominal_planner import PhaseProgress, nominal_control, nominal_rollout
from .rmpc_controller import RmpcProblem, RmpcSolution, solve_rmpc
from .world import PredictedPath, predict_path

NOMINAL, RMPC, BLENDING = "nominal", "rmpc", "blending"


@dataclass(frozen=True)
class Mode:
    kind: str = NOMINAL
    progress: float = 0.0  # blend weight of the nominal input, Blending only

    def __post_init__(self):
        if self.kind not in (NOMINAL, RMPC, BLENDING):
            raise ValueError(f"unknown mode {self.kind!r}")
        if not 0.0 <= self.progress <= 1.0:
            raise ValueError("blend progress must lie in [0, 1]")


@dataclass(frozen=True)
class SupervisorConfig:
    d_act: float = 1.5
    d_deact: float = 2.5
    N_safe: int = 10
    T_blend: float = 0.5

    def __post_init__(self):
        if not self.d_deact > self.d_act > 0:
            raise ValueError("need d_deact > d_act > 0")
        if self.N_safe < 1 or self.T_blend < 0:
            raise ValueError("need N_safe >= 1 and T_blend >= 0")


def min_predicted_distance(paths, p4) -> float:
    """Smallest planar gap between any predicted obstacle footprint and the end-effector.

    ``p4`` is either one point, compared with every predicted position, or one point per
    prediction step, compared step by step.
    """
    best = math.inf
    p4 = np.asarray(p4, dtype=float)
    for path in paths:
        xy = p4[..., :2] if p4.ndim == 1 else p4[:len(path.positions), :2]
        d = np.hypot(path.positions[:, 0] - xy[..., 0], path.positions[:, 1] - xy[..., 1]) - path.radius
        best = min(best, max(0.0, float(d.min())))
    return best


def paths_from_now(measurements, Np: int, dt: float) -> list[PredictedPath]:
    """Predicted paths with the measured position prepended, Np + 1 points each."""
    out = []
    for m in measurements:
        p = predict_path(m, Np, dt)
        out.append(PredictedPath(np.vstack([np.asarray(m.position)[None, :], p.positions]),
                                 np.full(Np + 1, m.height), np.concatenate([[m.stamp], p.stamps]), m.radius))
    return out


def nominal_tip_path(state: JointState, controls, geom, dt: float) -> np.ndarray:
    """End-effector positions along the open-loop nominal rollout, current point first."""
    q = rollout(state.as_array(), controls, dt)
    return np.array([end_effector(JointState.from_array(x), geom) for x in q])


def decide_mode(current: Mode, d_min: float, safe_streak: int, cfg: SupervisorConfig,
                dt: float) -> tuple[Mode, int]:
    if current.kind == NOMINAL:
        if d_min < cfg.d_act:
            return Mode(RMPC), 0
        return current, 0
    if current.kind == RMPC:
        streak = safe_streak + 1 if d_min > cfg.d_deact else 0
        if streak >= cfg.N_safe:
            return (Mode(BLENDING, 0.0), 0) if cfg.T_blend > 0 else (Mode(NOMINAL), 0)
        return current, streak
    # blending
    if d_min < cfg.d_act:
        return Mode(RMPC), 0
    if current.progress >= 1.0:
        return Mode(NOMINAL), 0
    return Mode(BLENDING, min(1.0, current.progress + dt / cfg.T_blend)), 0


def blend(u_nominal, u_rmpc, weight: float) -> np.ndarray:
    """Convex combination with ``weight`` on the nominal input."""
    return weight * np.asarray(u_nominal, dtype=float) + (1.0 - weight) * np.asarray(u_rmpc, dtype=float)


def ascent_input(state: JointState, sc) -> ControlInput:
    """Fastest admissible rise of the end-effector, stopping at the height-maximising angles."""
    q = state.as_array()
    peak = np.array([0.0, math.pi / 2, math.copysign(math.pi / 2, q[2] if q[2] != 0 else 1.0)])
    u = np.zeros(4)
    u[:3] = (peak - q[:3]) / sc.dt
    lo = np.maximum(sc.input_limits.lower, (np.array(sc.joint_limits.lower) - q) / sc.dt)
    hi = np.minimum(sc.input_limits.upper, (np.array(sc.joint_limits.upper) - q) / sc.dt)
    return ControlInput.from_array(np.clip(u, np.minimum(lo, 0.0), np.maximum(hi, 0.0)))


def floor_schedule(measurements, sc, speed_sets=None) -> np.ndarray:
    """Dynamic floor for prediction steps 0..Np-1.

    Step k holds over [t + k dt, t + (k+1) dt], so it takes the worse of the obstacle
    positions at both ends.  ``speed_sets`` maps a track id to the interval of speeds
    still consistent with its readings; the obstacle then counts wherever any of those
    speeds would put it inside the reach disc.
    """
    Np, dt = sc.rmpc.Np, sc.dt
    speed_sets = speed_sets or {}
    tau = dt * np.arange(Np + 1, dtype=float)
    f = np.full(Np + 1, float(sc.workspace.z_min))
    for m in measurements:
        lo, hi = speed_sets.get(m.ident, (m.speed, m.speed))
        p = np.asarray(m.position, dtype=float)
        u = np.array([math.cos(m.heading), math.sin(m.heading)])
        # closest point to the base along the segment of possible travel
        lam = np.clip(-float(p @ u), lo * tau, hi * tau)
        d = np.hypot(p[0] + lam * u[0], p[1] + lam * u[1])
        f = np.where(d <= sc.workspace.R_arm + m.radius, np.maximum(f, m.height), f)
    return np.maximum(f[:-1], f[1:])


@dataclass
class StepInfo:
    d_min: float = math.inf
    switch_event: str = ""
    z_floor: float = math.nan
    radial_bound: float = math.nan
    eps0: float = 0.0
    eps_max_step: float = 0.0
    solve_time: float = 0.0
    status: str = ""
    iterations: int = 0
    kkt: float = 0.0
    fallback: bool = False
    u_nominal: np.ndarray = field(default_factory=lambda: np.zeros(4))


def _intersect(old, new):
    # a reading that contradicts the history (model violated) restarts the track
    if old is None or max(old[0], new[0]) > min(old[1], new[1]):
        return new
    return max(old[0], new[0]), min(old[1], new[1])


class Supervisor:
    """Owns the mode, the safe-step streak and the warm-start state of the RMPC."""

    def __init__(self, scenario):
        self.sc = scenario
        self.mode = Mode()
        self.streak = 0
        self.last_solution: RmpcSolution | None = None
        self.u_rmpc_last = np.zeros(4)
        self.height_sets: dict[int, tuple[float, float]] = {}
        self.speed_sets: dict[int, tuple[float, float]] = {}

    def fuse(self, measurements) -> list:
        """Intersect each track's readings with everything seen before.

        A reading lies within delta_z (height) and delta_v (speed) of a truth that does not
        change, so the running intersection of the intervals still holds it.  The height and
        speed handed on are the interval midpoints, again within the noise bound of the
        truth; the floor additionally uses the whole speed interval.  Readings without a
        track id pass through unchanged.
        """
        dz, dv = self.sc.disturbance.delta_z, self.sc.disturbance.delta_v
        out = []
        for m in measurements:
            if m.ident is None:
                out.append(m)
                continue
            hlo, hhi = _intersect(self.height_sets.get(m.ident), (m.height - dz, m.height + dz))
            slo, shi = _intersect(self.speed_sets.get(m.ident), (max(0.0, m.speed - dv), m.speed + dv))
            self.height_sets[m.ident], self.speed_sets[m.ident] = (hlo, hhi), (slo, shi)
            out.append(replace(m, height=0.5 * (hlo + hhi), speed=0.5 * (slo + shi)))
        return out

    def control_step(self, state: JointState, progress: PhaseProgress, measurements,
                     t: float) -> tuple[ControlInput, PhaseProgress, StepInfo]:
        sc = self.sc
        info = StepInfo()
        measurements = self.fuse(measurements)
        ref = nominal_rollout(state, progress, sc.plan, sc.input_limits, sc.dt, sc.rmpc.Np)
        # the tip's own nominal motion counts too: a fast sweep closes the gap quicker than the obstacle
        tip = nominal_tip_path(state, ref, sc.geometry, sc.dt)
        info.d_min = min_predicted_distance(paths_from_now(measurements, sc.rmpc.Np, sc.dt), tip)

        previous = self.mode
        self.mode, self.streak = decide_mode(self.mode, info.d_min, self.streak, sc.supervisor, sc.dt)
        if self.mode.kind != previous.kind:
            info.switch_event = f"{previous.kind}->{self.mode.kind}"

        u_nom, new_progress = nominal_control(state, progress, sc.plan, sc.input_limits, sc.dt)
        info.u_nominal = u_nom.as_array()
        if self.mode.kind == NOMINAL:
            self.last_solution = None
            return u_nom, new_progress, info
        if self.mode.kind == BLENDING:
            self.last_solution = None
            u = blend(u_nom.as_array(), self.u_rmpc_last, self.mode.progress)
            return clamp_input(ControlInput.from_array(u), sc.input_limits), new_progress, info

        u = self._rmpc(state, ref, measurements, info)
        self.u_rmpc_last = u.as_array()
        return u, new_progress, info

    def _rmpc(self, state, ref, measurements, info: StepInfo) -> ControlInput:
        sc = self.sc
        Np = sc.rmpc.Np
        dist = DisturbanceBounds3.from_bounds(sc.disturbance, sc.dt)
        try:
            tw = tighten_workspace(sc.workspace, dist, floor_schedule(measurements, sc, self.speed_sets), Np, sc.dt,
                                   sc.rmpc.tightening_mode)
        except EmptyTighteningError:
            info.status, info.fallback = "empty-set", True
            self.last_solution = None
            return ascent_input(state, sc)
        info.z_floor, info.radial_bound = float(tw.zfloor[0]), float(tw.radial[0])
        problem = RmpcProblem(state, Np, sc.dt, sc.geometry, sc.joint_limits, sc.input_limits, tw,
                              sc.rmpc.weights, sc.rmpc.eps_max, reference=ref)
        sol = solve_rmpc(problem, self.last_solution, sc.rmpc.solver)
        info.solve_time, info.status = sol.solve_time, sol.status
        info.iterations, info.kkt = sol.iterations, sol.kkt_residual
        info.eps0, info.eps_max_step = float(sol.slacks[0]), float(sol.slacks.max())
        if sol.status == "infeasible":
            info.fallback = True
            self.last_solution = None
            return ascent_input(state, sc)
        self.last_solution = sol
        return clamp_input(ControlInput.from_array(sol.first_input), sc.input_limits)
