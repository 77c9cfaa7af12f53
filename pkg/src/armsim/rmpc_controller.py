"""Finite-horizon robust MPC with L1 input cost and penalised floor slack.

Decision vector (for the three joints that move the end-effector in its plane)::

    [ du (Np x 3) | s (Np x n_w) | eps (Np) ]

``du`` is the deviation of the commanded rates from a reference sequence (zero by
default, which gives the plain input cost), ``s`` are epigraph variables with
``|du| <= s`` for every positively weighted axis, and ``eps`` are the floor slacks.
The base rotation enters neither radius nor height, so its optimal rate is the
reference rate and it is never handed to the NLP.
"""
from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import nnls

from ._sqp import sqp

from .arm_model import ArmGeometry, InputLimits, JointLimits, JointState, radial_height, radial_height_jacobian, rollout
from .geometry_sets import TightenedWorkspace

STATUSES = ("converged", "max-iter", "infeasible")
_MARGIN = 1e-6  # constraint rows farther than this from reachability are never active


@dataclass(frozen=True)
class CostWeights:
    c1: float = 1.0
    c2: float = 3.0
    c3: float = 5.0
    c4: float = 100.0
    c_theta: float = 0.0

    def __post_init__(self):
        if min(self.c1, self.c2, self.c3, self.c4, self.c_theta) < 0:
            raise ValueError("cost weights must be non-negative")
        if self.c4 < 10 * max(self.c1, self.c2, self.c3):
            warnings.warn("slack weight c4 is not much larger than the input weights", stacklevel=2)

    @property
    def inputs(self) -> np.ndarray:
        return np.array([self.c1, self.c2, self.c3, self.c_theta])


@dataclass
class SolverOptions:
    maxiter: int = 60
    tol: float = 1e-6  # feasibility and stationarity acceptance


@dataclass(frozen=True)
class RmpcProblem:
    x0: JointState
    Np: int
    dt: float
    geometry: ArmGeometry
    joint_limits: JointLimits
    input_limits: InputLimits
    tightened: TightenedWorkspace
    weights: CostWeights = CostWeights()
    eps_max: float = 3.0
    reference: np.ndarray | None = None  # (Np, 4) rates the cost measures deviation from

    def __post_init__(self):
        if self.Np < 1:
            raise ValueError("Np must be at least 1")
        if self.tightened.horizon != self.Np:
            raise ValueError("tightened workspace must have exactly Np steps")
        if not self.eps_max > 0:
            raise ValueError("eps_max must be positive")
        if self.reference is not None and np.shape(self.reference) != (self.Np, 4):
            raise ValueError("reference must have shape (Np, 4)")

    def ref(self) -> np.ndarray:
        if self.reference is None:
            return np.zeros((self.Np, 4))
        return np.clip(np.asarray(self.reference, dtype=float), self.input_limits.lower, self.input_limits.upper)


@dataclass
class RmpcSolution:
    controls: np.ndarray  # (Np, 4)
    slacks: np.ndarray  # (Np,)
    states: np.ndarray  # (Np + 1, 4)
    objective: float
    status: str
    iterations: int = 0
    solve_time: float = 0.0
    kkt_residual: float = 0.0
    max_violation: float = 0.0
    message: str = ""

    @property
    def first_input(self) -> np.ndarray:
        return self.controls[0]


def rmpc_cost(controls, slacks, weights: CostWeights) -> float:
    """Weighted L1 norm of the rates plus the linear slack penalty."""
    u = np.asarray(controls, dtype=float).reshape(-1, 4)
    eps = np.asarray(slacks, dtype=float).reshape(-1)
    if len(u) != len(eps):
        raise ValueError("controls and slacks must have the same length")
    return float(np.sum(np.abs(u) @ weights.inputs) + weights.c4 * np.sum(eps))


def epigraph_bounds(controls) -> np.ndarray:
    """Tightest epigraph variables for the L1 terms, i.e. ``|u|``."""
    return np.abs(np.asarray(controls, dtype=float))


def epigraph_cost(bounds, slacks, weights: CostWeights) -> float:
    """Smooth (linear) objective over epigraph variables; equals :func:`rmpc_cost` at ``bounds = |u|``."""
    s = np.asarray(bounds, dtype=float).reshape(-1, 4)
    return float(np.sum(s @ weights.inputs) + weights.c4 * np.sum(slacks))


# --- interval certificates -------------------------------------------------------------

def _trig_range(fn, lo: float, hi: float) -> tuple[float, float]:
    """Exact range of sin or cos over [lo, hi]."""
    pts = [lo, hi]
    offset = 0.0 if fn is math.cos else math.pi / 2
    k = math.ceil((lo - offset) / math.pi)
    while offset + k * math.pi <= hi:
        pts.append(offset + k * math.pi)
        k += 1
    vals = [fn(p) for p in pts]
    return min(vals), max(vals)


def reachable_ranges(q0, steps: int, dt: float, geom: ArmGeometry, jl: JointLimits, il: InputLimits):
    """Exact ranges of radius and height over the box of joints reachable in ``steps`` steps.

    Both are sums of single-joint terms, so their ranges over a box are exact.  The
    joint pair is not, so a failure of either range proves infeasibility but passing
    both proves nothing.
    """
    lo = np.maximum(q0[:3] + steps * dt * np.array(il.lower[:3]), jl.lower[:3])
    hi = np.minimum(q0[:3] + steps * dt * np.array(il.upper[:3]), jl.upper[:3])
    if np.any(lo > hi):
        return None
    s_a = _trig_range(math.sin, lo[0], hi[0])
    c_a = _trig_range(math.cos, lo[0], hi[0])
    c_b = _trig_range(math.cos, lo[1], hi[1])
    s_b = _trig_range(math.sin, lo[1], hi[1])
    s_g = _trig_range(math.sin, lo[2], hi[2])
    c_g = _trig_range(math.cos, lo[2], hi[2])
    r_lo = -geom.L1 * s_a[1] + geom.L2 * c_b[0] + geom.L3 * s_g[0]
    r_hi = -geom.L1 * s_a[0] + geom.L2 * c_b[1] + geom.L3 * s_g[1]
    z_lo = geom.L1 * c_a[0] + geom.L2 * s_b[0] - geom.L3 * c_g[1]
    z_hi = geom.L1 * c_a[1] + geom.L2 * s_b[1] - geom.L3 * c_g[0]
    return (r_lo, r_hi), (z_lo, z_hi)


def infeasibility_certificate(problem: RmpcProblem) -> str | None:
    """Reason the problem is infeasible even with full slack, or None if no proof was found."""
    tw, g = problem.tightened, problem.geometry
    q0 = problem.x0.as_array()
    r0, z0 = radial_height(q0, g)
    if r0 * r0 > tw.radial[0] ** 2 + 1e-12:
        return "initial radius outside step-0 set"
    if z0 > tw.z_max + 1e-12:
        return "initial height above ceiling"
    if tw.zfloor[0] - z0 > problem.eps_max + 1e-12:
        return "initial height below floor by more than eps_max"
    for k in range(1, problem.Np):
        rng = reachable_ranges(q0, k, problem.dt, g, problem.joint_limits, problem.input_limits)
        if rng is None:
            return f"no admissible joints reachable at step {k}"
        (r_lo, r_hi), (z_lo, z_hi) = rng
        r2_min = 0.0 if r_lo <= 0.0 <= r_hi else min(r_lo * r_lo, r_hi * r_hi)
        if r2_min > tw.radial[k] ** 2:
            return f"radius bound unreachable at step {k}"
        if z_hi + problem.eps_max < tw.zfloor[k]:
            return f"floor unreachable at step {k}"
        if z_lo > tw.z_max:
            return f"ceiling unreachable at step {k}"
    return None


# --- NLP -------------------------------------------------------------------------------

@dataclass
class _Layout:
    Np: int
    weighted: np.ndarray  # indices of joints (0..2) with an epigraph variable
    n_du: int = field(init=False)
    n_s: int = field(init=False)
    n: int = field(init=False)

    def __post_init__(self):
        self.n_du = 3 * self.Np
        self.n_s = len(self.weighted) * self.Np
        self.n = self.n_du + self.n_s + self.Np

    def split(self, z):
        du = z[: self.n_du].reshape(self.Np, 3)
        s = z[self.n_du: self.n_du + self.n_s].reshape(self.Np, len(self.weighted))
        eps = z[self.n_du + self.n_s:]
        return du, s, eps


class _Nlp:
    """Objective, constraints and Jacobians of one RMPC instance."""

    def __init__(self, problem: RmpcProblem):
        self.p = problem
        w = problem.weights
        jw = np.array([w.c1, w.c2, w.c3])
        self.lay = _Layout(problem.Np, np.flatnonzero(jw > 0))
        lay = self.lay
        self.ref = problem.ref()
        self.q0 = problem.x0.as_array()
        Np, dt = problem.Np, problem.dt
        self.m = Np - 1  # constrained predicted states x_1 .. x_{Np-1}
        tw = problem.tightened
        # T[k-1, i] = dt when input i influences state k
        self.T = np.tril(np.full((Np, Np), dt), -1)[1:]

        self.c = np.zeros(lay.n)
        self.c[lay.n_du: lay.n_du + lay.n_s] = np.tile(jw[lay.weighted], Np)
        self.c[lay.n_du + lay.n_s:] = w.c4

        lower = np.empty(lay.n)
        upper = np.empty(lay.n)
        ref3 = self.ref[:, :3]
        lower[: lay.n_du] = (np.array(problem.input_limits.lower[:3]) - ref3).ravel()
        upper[: lay.n_du] = (np.array(problem.input_limits.upper[:3]) - ref3).ravel()
        smax = np.maximum(np.abs(lower[: lay.n_du]), np.abs(upper[: lay.n_du])).reshape(Np, 3)
        lower[lay.n_du: lay.n_du + lay.n_s] = 0.0
        upper[lay.n_du: lay.n_du + lay.n_s] = smax[:, lay.weighted].ravel()
        _, z0 = radial_height(self.q0, problem.geometry)
        tw = problem.tightened
        lower[lay.n_du + lay.n_s:] = 0.0
        lower[lay.n_du + lay.n_s] = min(max(0.0, tw.zfloor[0] - z0), problem.eps_max)
        upper[lay.n_du + lay.n_s:] = problem.eps_max
        self.lower, self.upper = lower, upper

        # rows that no reachable joint vector can make active are dropped
        il, jl = problem.input_limits, problem.joint_limits
        keep_r, keep_f, keep_c = [], [], []
        for k in range(1, Np):
            (r_lo, r_hi), (z_lo, z_hi) = reachable_ranges(self.q0, k, dt, problem.geometry, jl, il)
            keep_r.append(max(r_lo * r_lo, r_hi * r_hi) >= tw.radial[k] ** 2 - _MARGIN)
            keep_f.append(z_lo <= tw.zfloor[k] + _MARGIN)
            keep_c.append(z_hi >= tw.z_max - _MARGIN)
        self.rows = np.array(keep_r + keep_f + keep_c, dtype=bool)

        # linear constraints A z + b >= 0: joint limits on x_1..x_{Np-1} and epigraph pairs
        rows, rhs = [], []
        base = self.q0[:3] + np.cumsum(ref3 * dt, axis=0)[:-1]  # joints of x_1.. under du = 0
        for k in range(self.m):
            span = (k + 1) * dt
            for j in range(3):
                row = np.zeros(lay.n)
                row[j: 3 * (k + 1): 3] = dt
                if self.q0[j] + span * il.lower[j] <= jl.lower[j] + _MARGIN:
                    rows.append(row)
                    rhs.append(base[k, j] - jl.lower[j])
                if self.q0[j] + span * il.upper[j] >= jl.upper[j] - _MARGIN:
                    rows.append(-row)
                    rhs.append(jl.upper[j] - base[k, j])
        for k in range(Np):
            for idx, j in enumerate(lay.weighted):
                si = lay.n_du + k * len(lay.weighted) + idx
                for sign in (1.0, -1.0):
                    row = np.zeros(lay.n)
                    row[si] = 1.0
                    row[3 * k + j] = -sign
                    rows.append(row)
                    rhs.append(0.0)
        self.A = np.array(rows).reshape(-1, lay.n)
        self.b = np.array(rhs)

    # states of the three planar joints at steps 1..Np-1
    def joints(self, z):
        du, _, _ = self.lay.split(z)
        u = self.ref[:, :3] + du
        return self.q0[:3] + np.cumsum(u * self.p.dt, axis=0)[:-1]

    def objective(self, z):
        return float(self.c @ z)

    def objective_grad(self, z):
        return self.c

    def nonlinear(self, z):
        if not self.rows.any():
            return np.zeros(0)
        q = self.joints(z)
        r, h = radial_height(q, self.p.geometry)
        _, _, eps = self.lay.split(z)
        tw = self.p.tightened
        full = np.concatenate([tw.radial[1:] ** 2 - r * r, h - tw.zfloor[1:] + eps[1:], tw.z_max - h])
        return full[self.rows]

    def nonlinear_jac(self, z):
        lay, m = self.lay, self.m
        if not self.rows.any():
            return np.zeros((0, lay.n))
        q = self.joints(z)
        r, _ = radial_height(q, self.p.geometry)
        dr, dh = radial_height_jacobian(q, self.p.geometry)
        jac = np.zeros((3 * m, lay.n))
        jr = (self.T[:, :, None] * (-2.0 * r[:, None] * dr)[:, None, :]).reshape(m, lay.n_du)
        jh = (self.T[:, :, None] * dh[:, None, :]).reshape(m, lay.n_du)
        jac[:m, : lay.n_du] = jr
        jac[m: 2 * m, : lay.n_du] = jh
        jac[m: 2 * m, lay.n_du + lay.n_s + 1:] = np.eye(m)
        jac[2 * m:, : lay.n_du] = -jh
        return jac[self.rows]

    def nonlinear_hess(self, z, lam):
        """``sum_i lam_i * hess(g_i)`` over the nonlinear rows; linear rows add nothing."""
        lay, m = self.lay, self.m
        H = np.zeros((lay.n, lay.n))
        if not self.rows.any():
            return H
        full = np.zeros(3 * m)
        full[self.rows] = lam[: int(self.rows.sum())]
        q = self.joints(z)
        g = self.p.geometry
        r, _ = radial_height(q, g)
        dr, _ = radial_height_jacobian(q, g)
        a, b, c = q[:, 0], q[:, 1], q[:, 2]
        d2r = np.stack([g.L1 * np.sin(a), -g.L2 * np.cos(b), -g.L3 * np.sin(c)], axis=-1)
        d2z = np.stack([-g.L1 * np.cos(a), -g.L2 * np.sin(b), g.L3 * np.cos(c)], axis=-1)
        Hdu = np.zeros((lay.n_du, lay.n_du))
        for k in range(m):
            lr, lf, lc = full[k], full[m + k], full[2 * m + k]
            if lr == 0.0 and lf == 0.0 and lc == 0.0:
                continue
            Hq = -2.0 * lr * (np.outer(dr[k], dr[k]) + np.diag(r[k] * d2r[k])) + np.diag((lf - lc) * d2z[k])
            t = self.T[k]
            Hdu += np.kron(np.outer(t, t), Hq)
        H[: lay.n_du, : lay.n_du] = Hdu
        return H

    def constraints(self, z):
        return np.concatenate([self.nonlinear(z), self.A @ z + self.b])

    def constraints_jac(self, z):
        return np.vstack([self.nonlinear_jac(z), self.A])

    def max_violation(self, z):
        g = self.constraints(z)
        v = max(0.0, float(-g.min())) if g.size else 0.0
        return max(v, float(np.max(self.lower - z, initial=0.0)), float(np.max(z - self.upper, initial=0.0)))

    def kkt_residual(self, z, act_tol: float = 1e-7) -> float:
        """Stationarity residual with non-negative multipliers on the active constraints,
        relative to the largest objective-gradient entry."""
        g = self.constraints(z)
        J = self.constraints_jac(z)
        cols = [J[i] for i in np.flatnonzero(g <= act_tol)]
        eye = np.eye(self.lay.n)
        cols += [eye[i] for i in np.flatnonzero(z - self.lower <= act_tol)]
        cols += [-eye[i] for i in np.flatnonzero(self.upper - z <= act_tol)]
        grad = self.objective_grad(z)
        if not cols:
            return float(np.max(np.abs(grad)))
        A = np.array(cols).T
        lam = np.linalg.lstsq(A, grad, rcond=None)[0]
        if np.any(lam < 0):
            lam, _ = nnls(A, grad, maxiter=50 * A.shape[1])
        return float(np.max(np.abs(A @ lam - grad)) / max(1.0, float(np.max(np.abs(grad)))))

    def pack(self, controls):
        """Decision vector for absolute controls, with the tightest epigraph and slack values."""
        lay = self.lay
        du = np.clip(controls[:, :3] - self.ref[:, :3],
                     self.lower[: lay.n_du].reshape(-1, 3), self.upper[: lay.n_du].reshape(-1, 3))
        z = np.zeros(lay.n)
        z[: lay.n_du] = du.ravel()
        z[lay.n_du: lay.n_du + lay.n_s] = np.abs(du[:, lay.weighted]).ravel()
        states = self.q0[:3] + np.cumsum((self.ref[:, :3] + du) * self.p.dt, axis=0)
        _, h = radial_height(np.vstack([self.q0[:3], states[:-1]]), self.p.geometry)
        z[lay.n_du + lay.n_s:] = np.clip(self.p.tightened.zfloor - h, 0.0, self.p.eps_max)
        return np.clip(z, self.lower, self.upper)

    def controls(self, z):
        du, _, _ = self.lay.split(z)
        u = self.ref.copy()
        u[:, :3] += du
        return np.clip(u, self.p.input_limits.lower, self.p.input_limits.upper)


def _finish(problem: RmpcProblem, nlp: _Nlp, z, status, iterations, t0, message, kkt=0.0):
    controls = nlp.controls(z)
    # recompute from the returned controls so every reported quantity is mutually consistent
    z = nlp.pack(controls)
    _, _, eps = nlp.lay.split(z)
    slacks = eps.copy()
    viol = nlp.max_violation(z)
    return RmpcSolution(
        controls=controls,
        slacks=slacks,
        states=rollout(problem.x0.as_array(), controls, problem.dt),
        objective=rmpc_cost(controls - nlp.ref, slacks, problem.weights),
        status=status,
        iterations=iterations,
        solve_time=time.perf_counter() - t0,
        kkt_residual=kkt,
        max_violation=viol,
        message=message,
    )


def shift_warm_start(prev: RmpcSolution, Np: int) -> np.ndarray:
    """Drop the applied input and repeat the last one."""
    u = np.asarray(prev.controls, dtype=float)
    shifted = np.vstack([u[1:], u[-1:]]) if len(u) > 1 else u.copy()
    if len(shifted) < Np:
        shifted = np.vstack([shifted, np.repeat(shifted[-1:], Np - len(shifted), axis=0)])
    return shifted[:Np]


def solve_rmpc(problem: RmpcProblem, warm_start: RmpcSolution | np.ndarray | None = None,
               options: SolverOptions | None = None) -> RmpcSolution:
    """Solve the tightened RMPC problem.

    ``warm_start`` is either a previous solution (shifted by one step) or an explicit
    (Np, 4) control guess.  The returned solution always satisfies the input and slack
    boxes and carries the exact Euler rollout of its controls.
    """
    opts = options or SolverOptions()
    t0 = time.perf_counter()
    nlp = _Nlp(problem)
    reason = infeasibility_certificate(problem)
    if reason is not None:
        return _finish(problem, nlp, nlp.pack(nlp.ref), "infeasible", 0, t0, reason)

    # the reference itself is globally optimal whenever it needs no slack beyond the forced eps_0
    z_ref = nlp.pack(nlp.ref)
    _, _, eps_ref = nlp.lay.split(z_ref)
    if nlp.max_violation(z_ref) <= opts.tol and np.all(eps_ref[1:] <= 0.0):
        return _finish(problem, nlp, z_ref, "converged", 0, t0, "reference feasible")

    starts = []
    if isinstance(warm_start, RmpcSolution):
        starts.append(shift_warm_start(warm_start, problem.Np))
    elif warm_start is not None:
        starts.append(np.asarray(warm_start, dtype=float).reshape(problem.Np, 4))
    starts.append(nlp.ref)

    best = None
    total_iter = 0
    for guess in starts:
        z0 = nlp.pack(guess)
        res = sqp(nlp.c, z0, nlp.lower, nlp.upper, nlp.constraints, nlp.constraints_jac,
                  lambda z, lam: nlp.nonlinear_hess(z, lam), maxiter=opts.maxiter, tol=1e-2 * opts.tol)
        total_iter += res.iterations
        z = res.z
        viol = nlp.max_violation(z)
        kkt = res.stationarity if res.converged else (nlp.kkt_residual(z) if viol <= opts.tol else math.inf)
        cand = (viol > opts.tol, kkt > opts.tol, nlp.objective(z), z, kkt, res.message)
        if best is None or cand[:3] < best[:3]:
            best = cand
        if viol <= opts.tol and kkt <= opts.tol:
            break
    infeasible, not_stationary, _, z, kkt, message = best
    status = "converged" if not (infeasible or not_stationary) else "max-iter"
    return _finish(problem, nlp, z, status, total_iter, t0, str(message), kkt if math.isfinite(kkt) else math.nan)
