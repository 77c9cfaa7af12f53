"""Scenario loading, the fixed-step simulation loop, metrics, logs and batch runs."""
from __future__ import annotations

import csv
import json
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .arm_model import ArmGeometry, InputLimits, JointLimits, JointState, end_effector, step
from .baseline_controller import BaselineConfig, baseline_step
from .geometry_sets import TIGHTENING_MODES, DisturbanceBounds, WorkspaceSet
from .nominal_planner import Phase, PhasePlan, PhaseProgress, default_plan
from .rmpc_controller import CostWeights, SolverOptions
from .supervisor import RMPC, Supervisor, SupervisorConfig
from .world import Obstacle, SpawnConfig, measure, observed, spawn_obstacle, true_position

SCHEMA_VERSION = 1
LOG_COLUMNS = ("t", "mode", "alpha", "beta", "gamma", "theta", "u1", "u2", "u3", "u4", "x4", "y4", "z4",
               "d_min", "z_floor", "eps_max_step", "solve_time_s", "switch_event")
WALL_CLOCK_COLUMNS = ("solve_time_s",)
STOP_TOL = 1e-9


class ConfigError(ValueError):
    """Scenario document is malformed or inconsistent."""


@dataclass(frozen=True)
class RmpcConfig:
    Np: int = 10
    weights: CostWeights = CostWeights()
    eps_max: float = 3.0
    tightening_mode: str = "growing"
    solver: SolverOptions = field(default_factory=SolverOptions)


@dataclass(frozen=True)
class WorldConfig:
    R_detect: float = 10.0
    obstacles: tuple[Obstacle, ...] = ()
    # seeded per-run perturbation of the listed obstacles: start offset (m), heading (rad)
    p0_jitter: float = 0.0
    heading_jitter: float = 0.0
    spawn_mode: str = "none"  # none | poisson | scheduled
    spawn_rate: float = 0.0  # poisson arrivals per second
    spawn_window: tuple[float, float] = (0.0, 0.0)
    # scheduled: one seeded obstacle per (time, height) entry
    spawn_schedule: tuple[tuple[float, float], ...] = ()
    spawn: SpawnConfig = SpawnConfig()


@dataclass(frozen=True)
class RunConfig:
    cycles: int = 3
    max_time: float = 120.0


@dataclass(frozen=True)
class Scenario:
    name: str = "default"
    dt: float = 0.1
    geometry: ArmGeometry = ArmGeometry()
    joint_limits: JointLimits = JointLimits()
    input_limits: InputLimits = InputLimits()
    workspace: WorkspaceSet = WorkspaceSet()
    disturbance: DisturbanceBounds = DisturbanceBounds(0.3, 0.1)
    rmpc: RmpcConfig = RmpcConfig()
    supervisor: SupervisorConfig = SupervisorConfig()
    baseline: BaselineConfig = BaselineConfig()
    world: WorldConfig = WorldConfig()
    plan: PhasePlan = None
    initial_state: JointState | None = None
    run: RunConfig = RunConfig()

    def __post_init__(self):
        if self.plan is None:
            object.__setattr__(self, "plan", default_plan(self.geometry))
        validate_scenario(self)

    def start_state(self) -> JointState:
        return self.initial_state or self.plan.phases[0].target


def validate_scenario(sc: Scenario) -> None:
    if not sc.dt > 0:
        raise ConfigError("dt must be positive")
    if sc.geometry.reach > sc.workspace.R_arm:
        raise ConfigError(f"arm reach {sc.geometry.reach} exceeds R_arm {sc.workspace.R_arm}")
    for ph in sc.plan.phases:
        if not sc.joint_limits.contains(ph.target):
            raise ConfigError(f"phase {ph.name} target outside joint limits")
    if not sc.supervisor.d_deact < sc.world.R_detect:
        raise ConfigError("d_deact must be smaller than R_detect")
    if sc.rmpc.tightening_mode not in TIGHTENING_MODES:
        raise ConfigError(f"unknown tightening mode {sc.rmpc.tightening_mode!r}")
    if sc.rmpc.Np < 1 or not sc.rmpc.eps_max > 0:
        raise ConfigError("need Np >= 1 and eps_max > 0")
    if sc.world.p0_jitter < 0 or sc.world.heading_jitter < 0:
        raise ConfigError("jitter must be non-negative")
    for i, o in enumerate(sc.world.obstacles):
        if math.hypot(*o.p0) > sc.world.R_detect + sc.world.p0_jitter * math.sqrt(2):
            raise ConfigError(f"obstacle {i} starts outside the detection disc")
    if sc.world.spawn_mode not in ("none", "poisson", "scheduled"):
        raise ConfigError(f"unknown spawn mode {sc.world.spawn_mode!r}")
    if sc.run.cycles < 1 or not sc.run.max_time > 0:
        raise ConfigError("need at least one cycle and a positive time limit")


# --- JSON ------------------------------------------------------------------------------

def _take(d: dict, allowed, where: str) -> dict:
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected an object")
    unknown = set(d) - set(allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    return d


def _build(cls, d, where, **conv):
    names = [f.name for f in fields(cls)]
    d = _take(d, names, where)
    kw = {k: conv[k](v) if k in conv else v for k, v in d.items()}
    try:
        return cls(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _limits(cls, d, where):
    return _build(cls, d, where, lower=tuple, upper=tuple)


def _obstacle(d, where):
    return _build(Obstacle, d, where, p0=tuple)


def _plan(d, geom):
    if d == "default":
        return default_plan(geom)
    d = _take(d, ("phases", "gain", "tol"), "plan")
    phases = []
    for i, p in enumerate(d.get("phases", [])):
        p = _take(p, ("name", "target", "dwell", "rate_scale", "via"), f"plan.phases[{i}]")
        phases.append(Phase(p["name"], JointState(*p["target"]), p.get("dwell", 0.0), p.get("rate_scale", 1.0),
                            bool(p.get("via", False))))
    return PhasePlan(tuple(phases), d.get("gain", 2.0), d.get("tol", 0.02), geom)


def scenario_from_dict(doc: dict) -> Scenario:
    top = ("schema", "name", "description", "dt", "geometry", "joint_limits", "input_limits", "workspace",
           "disturbance", "rmpc", "supervisor", "baseline", "world", "plan", "initial_state", "run")
    doc = _take(doc, top, "scenario")
    if doc.get("schema") != SCHEMA_VERSION:
        raise ConfigError(f"scenario schema must be {SCHEMA_VERSION}")
    try:
        geom = _build(ArmGeometry, doc.get("geometry", {}), "geometry")
        kw = dict(name=doc.get("name", "unnamed"), dt=float(doc.get("dt", 0.1)), geometry=geom)
        if "joint_limits" in doc:
            kw["joint_limits"] = _limits(JointLimits, doc["joint_limits"], "joint_limits")
        if "input_limits" in doc:
            kw["input_limits"] = _limits(InputLimits, doc["input_limits"], "input_limits")
        if "workspace" in doc:
            kw["workspace"] = _build(WorkspaceSet, doc["workspace"], "workspace")
        if "disturbance" in doc:
            kw["disturbance"] = _build(DisturbanceBounds, doc["disturbance"], "disturbance")
        if "rmpc" in doc:
            kw["rmpc"] = _build(RmpcConfig, doc["rmpc"], "rmpc",
                                weights=lambda w: _build(CostWeights, w, "rmpc.weights"),
                                solver=lambda s: _build(SolverOptions, s, "rmpc.solver"))
        if "supervisor" in doc:
            kw["supervisor"] = _build(SupervisorConfig, doc["supervisor"], "supervisor")
        if "baseline" in doc:
            kw["baseline"] = _build(BaselineConfig, doc["baseline"], "baseline")
        if "world" in doc:
            kw["world"] = _build(
                WorldConfig, doc["world"], "world",
                obstacles=lambda lst: tuple(_obstacle(o, f"world.obstacles[{i}]") for i, o in enumerate(lst)),
                spawn_window=tuple,
                spawn_schedule=lambda lst: tuple((float(t), float(h)) for t, h in lst),
                spawn=lambda s: _build(SpawnConfig, s, "world.spawn", speed_range=tuple, height_range=tuple))
        if "plan" in doc:
            kw["plan"] = _plan(doc["plan"], geom)
        if "initial_state" in doc:
            kw["initial_state"] = JointState(*doc["initial_state"])
        if "run" in doc:
            kw["run"] = _build(RunConfig, doc["run"], "run")
        return Scenario(**kw)
    except ConfigError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read scenario {path}: {exc}") from exc
    return scenario_from_dict(doc)


def builtin_scenario(name: str) -> Scenario:
    """Load one of the scenarios shipped in ``armsim/scenarios``."""
    text = resources.files("armsim").joinpath("scenarios", f"{name}.json").read_text()
    return scenario_from_dict(json.loads(text))


# --- world -----------------------------------------------------------------------------

def world_obstacles(sc: Scenario, seed: int) -> list[Obstacle]:
    """Fixed obstacles followed by the seeded arrivals; independent of the controller."""
    w = sc.world
    cfg = replace(w.spawn, R_detect=w.R_detect)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), 0])))
    obs = []
    for o in w.obstacles:
        dx, dy = rng.uniform(-w.p0_jitter, w.p0_jitter, size=2)
        dh = rng.uniform(-w.heading_jitter, w.heading_jitter)
        obs.append(replace(o, p0=(o.p0[0] + dx, o.p0[1] + dy), heading=o.heading + dh))
    if w.spawn_mode == "poisson" and w.spawn_rate > 0:
        t0, t1 = w.spawn_window
        t = t0 + rng.exponential(1.0 / w.spawn_rate)
        while t <= t1:
            obs.append(spawn_obstacle(rng, cfg, spawn_time=float(t)))
            t += rng.exponential(1.0 / w.spawn_rate)
    elif w.spawn_mode == "scheduled":
        for t, h in w.spawn_schedule:
            obs.append(spawn_obstacle(rng, replace(cfg, height_range=(h, h)), spawn_time=t))
    return obs


def noise_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), 1])))


def separation(p4, obs: Obstacle, t: float) -> float:
    """Euclidean distance from the end-effector to the obstacle cylinder (0 inside)."""
    c = true_position(obs, t)
    planar = max(0.0, math.hypot(p4[0] - c[0], p4[1] - c[1]) - obs.radius)
    vertical = max(0.0, p4[2] - obs.height)
    return math.hypot(planar, vertical)


def in_collision(p4, obs: Obstacle, t: float) -> bool:
    c = true_position(obs, t)
    return math.hypot(p4[0] - c[0], p4[1] - c[1]) < obs.radius and p4[2] < obs.height


# --- run -------------------------------------------------------------------------------

@dataclass
class RunMetrics:
    completion_time: float
    completed: bool
    cycles_completed: int
    collision_count: int
    min_separation: float
    stop_steps: int
    critical_stops: int
    mode_switches: int
    rmpc_steps: int
    fallback_steps: int
    mean_solve_time: float
    max_solve_time: float
    mean_slack: float
    max_slack: float


@dataclass
class TrajectoryLog:
    rows: list = field(default_factory=list)
    obstacles: list = field(default_factory=list)  # (t, id, x, y, height) truth rows
    extras: list = field(default_factory=list)  # per-step diagnostics not in the CSV
    phases: list = field(default_factory=list)  # phase index at the start of each step

    def column(self, name):
        i = LOG_COLUMNS.index(name)
        return [r[i] for r in self.rows]


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    return repr(float(v))


def write_log_csv(log: TrajectoryLog, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOG_COLUMNS)
        for row in log.rows:
            w.writerow([_fmt(v) for v in row])


def write_obstacle_csv(log: TrajectoryLog, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("t", "id", "x", "y", "height"))
        for t, i, x, y, h in log.obstacles:
            w.writerow((_fmt(t), i, _fmt(x), _fmt(y), _fmt(h)))


def read_log_csv(path) -> TrajectoryLog:
    log = TrajectoryLog()
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != LOG_COLUMNS:
            raise ConfigError(f"{path}: not a trajectory log")
        for raw in reader:
            log.rows.append(tuple(v if k in ("mode", "switch_event") else float(v)
                                  for k, v in zip(LOG_COLUMNS, raw)))
    obs_path = Path(path).with_name("obstacles.csv")
    if obs_path.exists():
        with obs_path.open(newline="") as fh:
            reader = csv.reader(fh)
            next(reader)
            log.obstacles = [(float(t), int(i), float(x), float(y), float(h)) for t, i, x, y, h in reader]
    return log


def metrics_to_json(m: RunMetrics) -> str:
    def clean(v):
        return None if isinstance(v, float) and not math.isfinite(v) else v
    return json.dumps({k: clean(v) for k, v in asdict(m).items()}, indent=2, sort_keys=False)


def run(sc: Scenario, controller: str = "rmpc", seed: int = 0) -> tuple[RunMetrics, TrajectoryLog]:
    if controller not in ("rmpc", "baseline"):
        raise ConfigError(f"unknown controller {controller!r}")
    dt = sc.dt
    obstacles = world_obstacles(sc, seed)
    rng = noise_rng(seed)
    state = sc.start_state()
    progress = PhaseProgress.start(sc.plan)
    sup = Supervisor(sc) if controller == "rmpc" else None
    log = TrajectoryLog()

    collisions, stop_steps, critical_stops, switches = 0, 0, 0, 0
    touching = set()
    min_sep = math.inf
    solve_times, slacks = [], []
    rmpc_steps = fallback_steps = 0
    prev_mode = None
    completion, completed = sc.run.max_time, False
    n_steps = int(round(sc.run.max_time / dt))

    for n in range(n_steps):
        t = n * dt
        visible = [(i, o) for i, o in enumerate(obstacles) if observed(o, t, sc.world.R_detect)]
        measurements = [measure(o, t, rng, sc.disturbance, ident=i) for i, o in visible]
        for i, o in visible:
            x, y = true_position(o, t)
            log.obstacles.append((t, i, float(x), float(y), o.height))

        if sup is not None:
            u, progress_next, info = sup.control_step(state, progress, measurements, t)
            mode = sup.mode.kind
            d_min, z_floor, eps_step = info.d_min, info.z_floor, info.eps_max_step
            switch = info.switch_event
            u_nom = info.u_nominal
            if mode == RMPC:
                rmpc_steps += 1
                fallback_steps += int(info.fallback)
                if not info.fallback:
                    solve_times.append(info.solve_time)
                    slacks.append(info.eps_max_step)
            solve_time = info.solve_time
            extra = info
        else:
            u, progress_next, mode, d_min, u_nom = baseline_step(state, progress, measurements, sc)
            z_floor, eps_step, solve_time = math.nan, 0.0, 0.0
            switch = "" if prev_mode in (None, mode) else f"{prev_mode}->{mode}"
            critical_stops += int(mode == "critical" and prev_mode != "critical")
            extra = None
        if switch:
            switches += 1
        prev_mode = mode

        ua = u.as_array()
        if np.max(np.abs(ua)) < STOP_TOL and np.max(np.abs(u_nom)) >= STOP_TOL:
            stop_steps += 1

        p4 = end_effector(state, sc.geometry)
        log.rows.append((t, mode, *state.as_tuple(), *ua, *p4, d_min, z_floor, eps_step, solve_time, switch))
        log.extras.append(extra)
        log.phases.append(progress.index)

        state = step(state, u, dt)
        progress = progress_next
        t1 = t + dt
        p4n = end_effector(state, sc.geometry)
        for i, o in enumerate(obstacles):
            if t1 < o.spawn_time:
                continue
            min_sep = min(min_sep, separation(p4n, o, t1))
            hit = in_collision(p4n, o, t1)
            if hit and i not in touching:
                collisions += 1
            touching.discard(i) if not hit else touching.add(i)

        if progress.cycles >= sc.run.cycles:
            completion, completed = round(t1, 10), True
            break

    metrics = RunMetrics(
        completion_time=completion,
        completed=completed,
        cycles_completed=progress.cycles,
        collision_count=collisions,
        min_separation=min_sep,
        stop_steps=stop_steps,
        critical_stops=critical_stops,
        mode_switches=switches,
        rmpc_steps=rmpc_steps,
        fallback_steps=fallback_steps,
        mean_solve_time=float(np.mean(solve_times)) if solve_times else 0.0,
        max_solve_time=float(np.max(solve_times)) if solve_times else 0.0,
        mean_slack=float(np.mean(slacks)) if slacks else 0.0,
        max_slack=float(np.max(slacks)) if slacks else 0.0,
    )
    return metrics, log


# --- batch -----------------------------------------------------------------------------

def _run_one(args):
    sc, controller, seed = args
    try:
        m, _ = run(sc, controller, seed)
        return controller, seed, m, None
    except Exception as exc:  # reported per seed, batch continues
        return controller, seed, None, f"{type(exc).__name__}: {exc}"


def batch(sc: Scenario, controllers=("rmpc", "baseline"), seeds=range(1), workers: int = 1):
    """Run every (controller, seed) pair and aggregate.

    Returns ``(table, per_run, failures)``: ``table[controller][metric]`` holds
    mean/median/min/max plus ``win_rate`` (share of seeds where that controller
    finishes strictly first).
    """
    jobs = [(sc, c, s) for c in controllers for s in sorted(set(seeds))]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]
    results.sort(key=lambda r: (controllers.index(r[0]), r[1]))
    per_run = {c: {} for c in controllers}
    failures = []
    for c, s, m, err in results:
        if err is None:
            per_run[c][s] = m
        else:
            failures.append((c, s, err))

    table = {}
    numeric = [f.name for f in fields(RunMetrics)]
    for c in controllers:
        runs = [per_run[c][s] for s in sorted(per_run[c])]
        stats = {}
        for name in numeric:
            vals = [float(getattr(m, name)) for m in runs]
            if vals:
                stats[name] = dict(mean=float(np.mean(vals)), median=float(statistics.median(vals)),
                                   min=float(min(vals)), max=float(max(vals)))
        wins = 0
        common = [s for s in per_run[c] if all(s in per_run[o] for o in controllers)]
        for s in common:
            mine = per_run[c][s].completion_time
            if all(mine < per_run[o][s].completion_time for o in controllers if o != c):
                wins += 1
        stats["win_rate"] = wins / len(common) if common else float("nan")
        stats["runs"] = len(runs)
        table[c] = stats
    return table, per_run, failures


def write_batch_csv(table, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("controller", "metric", "mean", "median", "min", "max"))
        for c, stats in table.items():
            for name, s in stats.items():
                if isinstance(s, dict):
                    w.writerow((c, name, _fmt(s["mean"]), _fmt(s["median"]), _fmt(s["min"]), _fmt(s["max"])))
                else:
                    w.writerow((c, name, _fmt(s), "", "", ""))


# --- plot data -------------------------------------------------------------------------

def emit_plots(log: TrajectoryLog, out_dir) -> list[Path]:
    """Write ``z4_vs_t.csv`` and ``xy_topdown.csv`` for external plotting."""
    if not log.rows:
        raise ValueError("empty trajectory log")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create {out}: {exc}") from exc
    col = {name: i for i, name in enumerate(LOG_COLUMNS)}
    z_path, xy_path = out / "z4_vs_t.csv", out / "xy_topdown.csv"
    with z_path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("t", "z4", "zfloor", "mode"))
        for r in log.rows:
            w.writerow((_fmt(r[col["t"]]), _fmt(r[col["z4"]]), _fmt(r[col["z_floor"]]), r[col["mode"]]))
    ids = sorted({o[1] for o in log.obstacles})
    at = {(round(o[0], 9), o[1]): (o[2], o[3]) for o in log.obstacles}
    with xy_path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "x4", "y4"] + [f"obs{i}_{a}" for i in ids for a in ("x", "y")])
        for r in log.rows:
            t = r[col["t"]]
            cells = []
            for i in ids:
                p = at.get((round(t, 9), i))
                cells += ["", ""] if p is None else [_fmt(p[0]), _fmt(p[1])]
            w.writerow([_fmt(t), _fmt(r[col["x4"]]), _fmt(r[col["y4"]])] + cells)
    return [z_path, xy_path]
