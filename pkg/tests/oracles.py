"""Independent reference computations used by the tests.

Nothing here calls into the solver; kinematics are re-derived from the link formulas.
"""
import itertools

import numpy as np


def tip_rz(q, L):
    """In-plane radius and height of the end-effector, written out from the link geometry."""
    a, b, g = q[..., 0], q[..., 1], q[..., 2]
    r = -L[0] * np.sin(a) + L[1] * np.cos(b) + L[2] * np.sin(g)
    z = L[0] * np.cos(a) + L[1] * np.sin(b) - L[2] * np.cos(g)
    return r, z


def brute_force_rmpc(problem, levels=5):
    """Exhaustive search over quantised planar rates for a small horizon.

    Every input axis of every step takes ``levels`` evenly spaced values across its box.
    The base rate is fixed at zero: it moves neither radius nor height and costs
    ``c_theta >= 0``.  Only x_1 .. x_{Np-1} are constrained, so the last input enters the
    cost alone and its best level is taken in closed form; all other steps are enumerated.
    Returns (best cost, best controls) or (inf, None).
    """
    p = problem
    Np, dt = p.Np, p.dt
    L = (p.geometry.L1, p.geometry.L2, p.geometry.L3)
    w = p.weights
    cw = np.array([w.c1, w.c2, w.c3])
    axes = [np.linspace(lo, hi, levels) for lo, hi in zip(p.input_limits.lower[:3], p.input_limits.upper[:3])]
    per_step = np.array(list(itertools.product(*axes)))  # (levels**3, 3)
    n = len(per_step)
    last_cost = np.abs(per_step) @ np.array([w.c1, w.c2, w.c3])
    last = per_step[int(np.argmin(last_cost))]
    idx = np.array(list(itertools.product(range(n), repeat=Np - 1))).reshape(-1, Np - 1)
    u = per_step[idx]  # (M, Np - 1, 3)
    q0 = p.x0.as_array()[:3]
    states = q0 + np.cumsum(u * dt, axis=1)  # x_1 .. x_{Np-1}
    tw = p.tightened
    _, z0 = tip_rz(q0[None, :], L)
    eps0 = max(0.0, tw.zfloor[0] - float(z0[0]))
    cost = np.abs(u) @ cw
    cost = cost.sum(axis=1) + float(last_cost.min()) + w.c4 * eps0
    ok = np.ones(len(u), dtype=bool)
    lo, hi = np.array(p.joint_limits.lower[:3]), np.array(p.joint_limits.upper[:3])
    for k in range(1, Np):
        x = states[:, k - 1]
        r, z = tip_rz(x, L)
        eps = np.maximum(0.0, tw.zfloor[k] - z)
        ok &= eps <= p.eps_max
        ok &= r * r <= tw.radial[k] ** 2
        ok &= z <= tw.z_max
        ok &= np.all((x >= lo) & (x <= hi), axis=1)
        cost = cost + w.c4 * eps
    if not ok.any() or len(u) == 0:
        return np.inf, None
    cost = np.where(ok, cost, np.inf)
    i = int(np.argmin(cost))
    controls = np.zeros((Np, 4))
    controls[:-1, :3] = u[i]
    controls[-1, :3] = last
    return float(cost[i]), controls


def central_jacobian(fun, z, h=1e-6):
    z = np.asarray(z, dtype=float)
    f0 = fun(z)
    jac = np.zeros((len(f0), len(z)))
    for j in range(len(z)):
        e = np.zeros_like(z)
        e[j] = h
        jac[:, j] = (fun(z + e) - fun(z - e)) / (2 * h)
    return jac
