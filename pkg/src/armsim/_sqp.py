"""Small dense SQP for problems with a linear objective.

    min  c @ z   s.t.  g(z) >= 0,  lb <= z <= ub

Each iteration solves a convex QP (exact Lagrangian Hessian with eigenvalues
lifted to a positive floor) with ``quadprog`` and globalises the step with a
backtracking line search on the exact L1 penalty merit function.  A rejected
full step gets one second-order correction first, which avoids the crawl
that curved constraints otherwise cause near a feasible point.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import quadprog


@dataclass
class SqpResult:
    z: np.ndarray
    multipliers: np.ndarray  # one per row of g
    iterations: int
    converged: bool
    stationarity: float
    violation: float
    message: str


def _convexify(H: np.ndarray, floor: float) -> np.ndarray:
    n = len(H)
    B = np.eye(n) * floor
    idx = np.flatnonzero(np.any(H != 0.0, axis=1))
    if len(idx):
        w, V = np.linalg.eigh(H[np.ix_(idx, idx)])
        B[np.ix_(idx, idx)] = (V * np.maximum(w, floor)) @ V.T
    return B


def _solve_qp(B, c, g, J, dlo, dhi, elastic_weight=None):
    """QP step; returns (d, lam_g, nu) with nu the net bound multipliers."""
    n = len(c)
    fixed = dlo >= dhi
    free = ~fixed
    if elastic_weight is None:
        eq = np.eye(n)[fixed].T
        C = np.hstack([eq, J.T, np.eye(n)[:, free], -np.eye(n)[:, free]])
        b = np.concatenate([dlo[fixed], -g, dlo[free], -dhi[free]])
        sol = quadprog.solve_qp(B, -c, C, b, int(fixed.sum()))
        d, lag = sol[0], sol[4]
        m = len(g)
        nf = int(fixed.sum())
        lam = lag[nf: nf + m]
        nu = np.zeros(n)
        nu[fixed] = lag[:nf]
        nfree = int(free.sum())
        nu[free] = lag[nf + m: nf + m + nfree] - lag[nf + m + nfree:]
        return d, lam, nu
    # elastic variables v >= 0 on every row of g
    m = len(g)
    BB = np.zeros((n + m, n + m))
    BB[:n, :n] = B
    BB[n:, n:] = np.eye(m) * B.diagonal().min()
    cc = np.concatenate([c, np.full(m, elastic_weight)])
    JJ = np.hstack([J, np.eye(m)])
    lo = np.concatenate([dlo, np.zeros(m)])
    hi = np.concatenate([dhi, np.full(m, np.inf)])
    fixed = np.concatenate([fixed, np.zeros(m, bool)])
    free = ~fixed
    up = free & np.isfinite(hi)
    C = np.hstack([np.eye(n + m)[fixed].T, JJ.T, np.eye(n + m)[:, free], -np.eye(n + m)[:, up]])
    b = np.concatenate([lo[fixed], -g, lo[free], -hi[up]])
    sol = quadprog.solve_qp(BB, -cc, C, b, int(fixed.sum()))
    nf = int(fixed.sum())
    lam = sol[4][nf: nf + m]
    return sol[0][:n], lam, None


def sqp(c, z0, lb, ub, cons, cons_jac, cons_hess, *, maxiter=60, tol=1e-6, hess_floor=None) -> SqpResult:
    """Run SQP from ``z0`` (clipped into the bounds).

    ``cons_hess(z, lam)`` returns ``sum_i lam_i * hess(g_i)(z)``.  Convergence requires
    relative stationarity, primal feasibility and complementarity all below ``tol``.
    """
    c = np.asarray(c, dtype=float)
    scale = max(1.0, float(np.max(np.abs(c))))
    floor = hess_floor if hess_floor is not None else 1e-3 * scale
    z = np.clip(np.asarray(z0, dtype=float), lb, ub)
    g = cons(z)
    lam = np.zeros(len(g))
    rho = 10.0 * scale

    def merit(zz, gg):
        return float(c @ zz + rho * np.sum(np.maximum(0.0, -gg)))

    message = "iteration limit"
    stat = viol = math.inf
    for it in range(1, maxiter + 1):
        J = cons_jac(z)
        B = _convexify(-cons_hess(z, lam), floor)
        dlo, dhi = lb - z, ub - z
        try:
            d, lam_new, nu = _solve_qp(B, c, g, J, dlo, dhi)
        except ValueError:
            d, lam_new, nu = _solve_qp(B, c, g, J, dlo, dhi, elastic_weight=rho)
        viol = float(np.max(np.maximum(0.0, -g), initial=0.0))
        # KKT measures at the current point with the QP multipliers
        if nu is not None:
            stat = float(np.max(np.abs(c - J.T @ lam_new - nu))) / scale
            comp = float(np.max(np.abs(lam_new * g), initial=0.0)) / scale
            if stat <= tol and viol <= tol and comp <= tol:
                lam = lam_new
                message = "converged"
                return SqpResult(z, lam, it - 1, True, stat, viol, message)
        rho = max(rho, 2.0 * float(np.max(np.abs(lam_new), initial=0.0)))
        phi = merit(z, g)
        slope = float(c @ d) - rho * float(np.sum(np.maximum(0.0, -g)))
        alpha = 1.0
        zt = np.clip(z + d, lb, ub)
        gt = cons(zt)
        if merit(zt, gt) > phi + 1e-4 * min(slope, 0.0):
            # second-order correction: re-linearise with the constraint values at the trial point
            try:
                dc, _, _ = _solve_qp(B, c, gt - J @ (zt - z), J, dlo, dhi)
            except ValueError:
                dc = None
            if dc is not None:
                zc = np.clip(z + dc, lb, ub)
                gc = cons(zc)
                if merit(zc, gc) <= phi + 1e-4 * min(slope, 0.0):
                    z, g, lam = zc, gc, lam_new
                    continue
        while True:
            zt = np.clip(z + alpha * d, lb, ub)
            gt = cons(zt)
            if merit(zt, gt) <= phi + 1e-4 * alpha * min(slope, 0.0) or alpha < 1e-10:
                break
            alpha *= 0.5
        if alpha < 1e-10:
            message = "line search failed"
            lam = lam_new
            break
        z, g, lam = zt, gt, lam_new
        if np.max(np.abs(alpha * d)) < 1e-14:
            message = "step too small"
            break
    viol = float(np.max(np.maximum(0.0, -g), initial=0.0))
    return SqpResult(z, lam, maxiter, False, stat, viol, message)
