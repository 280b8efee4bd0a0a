"""Solvers for :class:`~ellipccp.model.DeterministicProgram`.

Cone-free programs go through a dense two-phase simplex that also returns
dual multipliers.  Programs with cone terms go through a log-barrier
interior-point method on the smoothed norms ``sqrt(||M y + v||^2 + eps)``.
Either way the returned point is checked with :func:`check_kkt`, which uses
the exact (unsmoothed) subgradients.

All programs carry the implicit bounds ``x >= 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import minimize, nnls

from .model import DeterministicProgram, Sense, Solution, Status

__all__ = ["SolverOptions", "solve", "check_kkt", "simplex", "LPResult"]


@dataclass(frozen=True)
class SolverOptions:
    """Tolerances and limits for :func:`solve`.

    Parameters
    ----------
    feasibility_tol : float
        Largest accepted constraint violation at an optimal point.
    kkt_tol : float
        Largest accepted relative stationarity residual.
    max_iterations : int
        Cap on simplex pivots or Newton steps (both phases together).
    cone_smoothing_eps : float
        The ``eps`` in ``sqrt(q + eps)`` used by the barrier method.
    """

    feasibility_tol: float = 1e-8
    kkt_tol: float = 1e-6
    max_iterations: int = 10000
    cone_smoothing_eps: float = 1e-9
    box_bound: float = 1e9

    def __post_init__(self):
        for name in ("feasibility_tol", "kkt_tol", "max_iterations", "cone_smoothing_eps", "box_bound"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")


# ---------------------------------------------------------------------------
# simplex


@dataclass
class LPResult:
    status: Status
    x: np.ndarray
    objective: float
    duals: Optional[np.ndarray] = None
    dual_objective: float = math.nan
    iterations: int = 0
    message: str = ""


class _Tableau:
    """Dense simplex tableau ``[A | b]`` with basis bookkeeping."""

    def __init__(self, A, b, basis):
        self.T = np.hstack([A, b[:, None]]).astype(float)
        self.basis = list(basis)
        self.pivots = 0

    def pivot(self, r, j):
        T = self.T
        T[r] /= T[r, j]
        col = T[:, j].copy()
        col[r] = 0.0
        T -= np.outer(col, T[r])
        self.basis[r] = j
        self.pivots += 1

    def reduced_costs(self, cost):
        cb = cost[self.basis]
        return cost - cb @ self.T[:, :-1]

    def run(self, cost, allowed, max_pivots, tol):
        """Minimise ``cost`` over the current tableau.

        Dantzig's rule, switching to Bland's rule after a run of degenerate
        pivots so cycling cannot happen.  Returns "optimal", "unbounded" or
        "max_iterations".
        """
        degenerate = 0
        while True:
            if self.pivots >= max_pivots:
                return "max_iterations"
            rc = self.reduced_costs(cost)
            rc[~allowed] = 0.0
            rc[self.basis] = 0.0
            candidates = np.flatnonzero(rc < -tol)
            if candidates.size == 0:
                return "optimal"
            if degenerate > 50:
                j = int(candidates[0])
            else:
                j = int(candidates[np.argmin(rc[candidates])])
            col = self.T[:, j]
            rows = np.flatnonzero(col > 1e-11 * max(1.0, np.max(np.abs(col))))
            if rows.size == 0:
                return "unbounded"
            ratios = self.T[rows, -1] / col[rows]
            best = ratios.min()
            ties = rows[ratios <= best + 1e-12 * max(1.0, abs(best))]
            r = int(min(ties, key=lambda i: self.basis[i]))
            degenerate = degenerate + 1 if best <= 1e-12 else 0
            self.pivot(r, j)


def simplex(c, G, h, max_iterations: int = 10000) -> LPResult:
    """Minimise ``c'x`` subject to ``G x <= h``, ``x >= 0``.

    Returns the primal point, the multipliers ``lam >= 0`` of the rows of G
    and the dual objective ``-h' lam``.
    """
    c = np.asarray(c, dtype=float)
    G = np.asarray(G, dtype=float).reshape(-1, c.size)
    h = np.asarray(h, dtype=float)
    m, n = G.shape
    scale = max(1.0, float(np.max(np.abs(c))) if n else 1.0)
    tol = 1e-10 * scale

    flip = np.where(h < 0, -1.0, 1.0)
    A = np.hstack([G * flip[:, None], np.diag(flip)])
    b = h * flip
    art_rows = np.flatnonzero(flip < 0)
    n_art = art_rows.size
    art = np.zeros((m, n_art))
    art[art_rows, np.arange(n_art)] = 1.0
    A = np.hstack([A, art])
    width = n + m + n_art
    basis = [n + i for i in range(m)]
    for k, i in enumerate(art_rows):
        basis[i] = n + m + k
    tab = _Tableau(A, b, basis)
    allowed = np.ones(width, dtype=bool)
    keep = np.ones(m, dtype=bool)

    if n_art:
        cost1 = np.zeros(width)
        cost1[n + m:] = 1.0
        state = tab.run(cost1, allowed, max_iterations, 1e-11)
        if state == "max_iterations":
            return LPResult(Status.MAX_ITERATIONS, np.zeros(n), math.nan, iterations=tab.pivots,
                            message="iteration limit in phase 1")
        residual = float(tab.T[:, -1] @ cost1[tab.basis])
        bscale = max(1.0, float(np.max(np.abs(h))))
        if residual > 1e-9 * bscale:
            return LPResult(Status.INFEASIBLE, np.zeros(n), math.nan, iterations=tab.pivots,
                            message=f"phase-1 residual {residual:.3e} > 0: constraints are infeasible")
        # drive artificials out of the basis; drop rows that are redundant
        for r in range(m):
            if tab.basis[r] >= n + m:
                row = tab.T[r, : n + m]
                nz = np.flatnonzero(np.abs(row) > 1e-9)
                if nz.size:
                    tab.pivot(r, int(nz[0]))
                else:
                    keep[r] = False
        if not keep.all():
            tab.T = tab.T[keep]
            tab.basis = [bi for bi, k in zip(tab.basis, keep) if k]
        allowed[n + m:] = False

    cost2 = np.zeros(width)
    cost2[:n] = c
    state = tab.run(cost2, allowed, max_iterations, tol)
    if state == "max_iterations":
        return LPResult(Status.MAX_ITERATIONS, np.zeros(n), math.nan, iterations=tab.pivots,
                        message="iteration limit in phase 2")

    # recompute the basic solution and duals from the original data
    basis = np.array(tab.basis, dtype=int)
    A0 = A[:, : n + m]
    rows = np.flatnonzero(keep)
    B = A0[np.ix_(rows, basis)]
    xb = np.linalg.solve(B, b[rows]) if basis.size else np.zeros(0)
    z = np.zeros(width)
    z[basis] = xb
    x = np.clip(z[:n], 0.0, None)
    if state == "unbounded":
        return LPResult(Status.UNBOUNDED, x, -math.inf, iterations=tab.pivots,
                        message="objective is unbounded below on the feasible set")
    y = np.zeros(m)
    if basis.size:
        y[rows] = np.linalg.solve(B.T, cost2[basis])
    lam = np.clip(-flip * y, 0.0, None)
    return LPResult(Status.OPTIMAL, x, float(c @ x), duals=lam, dual_objective=float(-h @ lam),
                    iterations=tab.pivots)


# ---------------------------------------------------------------------------
# barrier method


class _Cone:
    """``kappa * sqrt(||M z + v||^2 + eps)`` on the solver variable z."""

    __slots__ = ("kappa", "M", "v")

    def __init__(self, kappa, M, v):
        self.kappa = float(kappa)
        self.M = M
        self.v = v

    def eval(self, z, eps, order=2):
        q = self.M @ z + self.v
        s = math.sqrt(float(q @ q) + eps)
        val = self.kappa * s
        if order == 0:
            return val, None, None
        g = self.M.T @ q
        grad = self.kappa * g / s
        if order == 1:
            return val, grad, None
        hess = self.kappa * ((self.M.T @ self.M) / s - np.outer(g, g) / s**3)
        return val, grad, hess


def _cone_parts(term, n, width):
    """(M, v) of a ConeTerm, padded to ``width`` solver variables."""
    L = np.asarray(term.root, dtype=float)
    M = np.zeros((L.shape[0], width))
    M[:, :n] = L[:, :n]
    v = -L[:, n] if term.augmented else np.zeros(L.shape[0])
    return M, v


class _Barrier:
    """Barrier problem: min ``w'z + cone0(z)`` s.t. ``a_i'z + o_i + cone_i(z) < 0``, ``lo < z < hi``."""

    def __init__(self, w, cone0, A, o, cones, lo, hi, eps):
        self.w = w
        self.cone0 = cone0
        self.A = A
        self.o = o
        self.cones = cones
        self.lo = lo
        self.hi = hi
        self.eps = eps
        self.lo_idx = np.flatnonzero(np.isfinite(lo))
        self.hi_idx = np.flatnonzero(np.isfinite(hi))
        self.n_ineq = A.shape[0] + self.lo_idx.size + self.hi_idx.size

    def f0(self, z, order=0):
        val = float(self.w @ z)
        grad = self.w.copy() if order >= 1 else None
        hess = np.zeros((z.size, z.size)) if order >= 2 else None
        if self.cone0 is not None:
            cv, cg, ch = self.cone0.eval(z, self.eps, order)
            val += cv
            if order >= 1:
                grad += cg
            if order >= 2:
                hess += ch
        return val, grad, hess

    def constraints(self, z, order=0):
        vals = self.A @ z + self.o
        grads = self.A.copy() if order >= 1 else None
        hessians = [None] * len(vals)
        for i, cone in enumerate(self.cones):
            if cone is None:
                continue
            cv, cg, ch = cone.eval(z, self.eps, order)
            vals[i] += cv
            if order >= 1:
                grads[i] += cg
            hessians[i] = ch
        return vals, grads, hessians

    def value(self, z, t):
        """Barrier objective, +inf outside the domain."""
        g, _, _ = self.constraints(z)
        dl = z[self.lo_idx] - self.lo[self.lo_idx]
        du = self.hi[self.hi_idx] - z[self.hi_idx]
        if np.any(g >= 0) or np.any(dl <= 0) or np.any(du <= 0):
            return math.inf
        return t * self.f0(z)[0] - np.log(-g).sum() - np.log(dl).sum() - np.log(du).sum()

    def newton(self, z, t):
        _, g0, h0 = self.f0(z, 2)
        g, J, Hs = self.constraints(z, 2)
        inv = 1.0 / (-g)
        grad = t * g0 + J.T @ inv
        H = t * h0 + (J.T * inv**2) @ J
        for i, Hi in enumerate(Hs):
            if Hi is not None:
                H += Hi * inv[i]
        dl = z[self.lo_idx] - self.lo[self.lo_idx]
        du = self.hi[self.hi_idx] - z[self.hi_idx]
        grad[self.lo_idx] -= 1.0 / dl
        grad[self.hi_idx] += 1.0 / du
        diag = np.zeros(z.size)
        diag[self.lo_idx] += 1.0 / dl**2
        diag[self.hi_idx] += 1.0 / du**2
        H[np.diag_indices_from(H)] += diag
        # Jacobi scaling keeps the solve well conditioned as t grows
        d = np.sqrt(np.maximum(np.diag(H), 1e-300))
        Hs_ = H / np.outer(d, d)
        try:
            step = -np.linalg.solve(Hs_, grad / d) / d
        except np.linalg.LinAlgError:
            step = -np.linalg.lstsq(Hs_, grad / d, rcond=None)[0] / d
        return step, float(-grad @ step)

    def center(self, z, t, budget, stop=None):
        """Newton's method on the barrier objective; returns (z, steps, ok)."""
        steps = 0
        val = self.value(z, t)
        while steps < budget:
            step, dec2 = self.newton(z, t)
            if not np.all(np.isfinite(step)):
                return z, steps, False
            # the barrier value grows like t*f0, so the decrement can only be
            # resolved relative to it
            if dec2 / 2 <= 1e-11 + 1e-14 * abs(val):
                return z, steps, True
            s = 1.0
            while True:
                cand = z + s * step
                cv = self.value(cand, t)
                if cv <= val - 0.25 * s * dec2:
                    break
                s *= 0.5
                if s < 1e-16:
                    return z, steps, True  # no further progress at this precision
            z, val = cand, cv
            steps += 1
            if stop is not None and stop(z):
                return z, steps, True
        return z, steps, False

    def duals(self, z, t):
        g, _, _ = self.constraints(z)
        lam = 1.0 / (t * (-g))
        lo = np.zeros(z.size)
        hi = np.zeros(z.size)
        lo[self.lo_idx] = 1.0 / (t * (z[self.lo_idx] - self.lo[self.lo_idx]))
        hi[self.hi_idx] = 1.0 / (t * (self.hi[self.hi_idx] - z[self.hi_idx]))
        return lam, lo, hi


def _minimisation_data(program: DeterministicProgram):
    """Objective of the equivalent minimisation: ``sign * Z``."""
    sign = 1.0 if program.sense is Sense.MINIMIZE else -1.0
    cone = program.cone_objective
    if cone is not None and sign * cone.scale < 0:
        raise ValueError(
            "objective cone term has the wrong sign for the sense (nonconvex): "
            "minimize needs a nonnegative weight, maximize a nonpositive one"
        )
    return sign


def _barrier_solve(program: DeterministicProgram, options: SolverOptions):
    n, m = program.n, program.m
    eps = options.cone_smoothing_eps
    sign = _minimisation_data(program)
    R = options.box_bound
    A = np.array([c.linear for c in program.constraints]).reshape(m, n)
    o = np.array([c.offset for c in program.constraints], dtype=float)

    def cones_for(width):
        out = []
        for c in program.constraints:
            if c.cone is None or c.cone.scale == 0:
                out.append(None)
            else:
                M, v = _cone_parts(c.cone, n, width)
                out.append(_Cone(c.cone.scale, M, v))
        return out

    budget = options.max_iterations
    used = 0
    x = np.ones(n)
    if x.max() >= R:
        x = np.full(n, R / 2)
    shift = 0.0

    if m:
        cons1 = cones_for(n + 1)
        g_s = A @ x + o + np.array([0.0 if c is None else c.eval(np.append(x, 0.0), eps, 0)[0] for c in cons1])
        if np.max(g_s) >= 0:
            # phase I: min s s.t. g_i(x) <= s, 0 < x < R
            A1 = np.hstack([A, -np.ones((m, 1))])
            w1 = np.zeros(n + 1)
            w1[-1] = 1.0
            lo = np.append(np.zeros(n), -np.inf)
            hi = np.append(np.full(n, R), np.inf)
            ph1 = _Barrier(w1, None, A1, o, cons1, lo, hi, eps)
            z = np.append(x, float(np.max(g_s)) + 1.0)
            # smoothing lifts each cone by at most kappa * sqrt(eps)
            bias = max((c.kappa * math.sqrt(eps) for c in cons1 if c is not None), default=0.0)
            t = 1.0
            feasible_now = lambda zz: zz[-1] < 0
            while True:
                z, k, ok = ph1.center(z, t, budget - used, stop=feasible_now)
                used += k
                gap = ph1.n_ineq / t
                if z[-1] < 0:
                    break
                if used >= budget:
                    return None, Status.MAX_ITERATIONS, used, "iteration limit in phase I", None
                if z[-1] - gap > options.feasibility_tol + bias:
                    return (z[:n], Status.INFEASIBLE, used,
                            f"phase-1 residual {z[-1]:.3e} > 0: constraints are infeasible", None)
                if gap <= 1e-3 * options.feasibility_tol:
                    if z[-1] <= options.feasibility_tol:
                        # no strict interior; relax by the phase-I level
                        shift = z[-1] + 0.5 * options.feasibility_tol
                        break
                    if z[-1] <= options.feasibility_tol + bias:
                        return (z[:n], Status.NUMERICAL_FAILURE, used,
                                f"phase-1 residual {z[-1]:.3e} is within the cone smoothing bias {bias:.3e}; "
                                "the feasible set has no interior at this resolution", None)
                    return (z[:n], Status.INFEASIBLE, used,
                            f"phase-1 residual {z[-1]:.3e} > 0: constraints are infeasible", None)
                t *= 10.0
            x = z[:n]

    w = sign * program.linear_objective
    cone0 = None
    if program.cone_objective is not None and program.cone_objective.scale != 0:
        M0, v0 = _cone_parts(program.cone_objective, n, n)
        cone0 = _Cone(sign * program.cone_objective.scale, M0, v0)
    ph2 = _Barrier(w, cone0, A, o - shift, cones_for(n), np.zeros(n), np.full(n, R), eps)
    f_start = ph2.f0(x)[0]
    t = max(1e-6, ph2.n_ineq / max(1.0, abs(f_start)))
    mu = 15.0
    while True:
        x, k, ok = ph2.center(x, t, budget - used)
        used += k
        if not ok and used >= budget:
            return x, Status.MAX_ITERATIONS, used, "iteration limit in phase II", ph2.duals(x, t)[0]
        fval = ph2.f0(x)[0]
        if ph2.n_ineq / t <= 1e-9 * max(1.0, abs(fval)):
            break
        t *= mu
    lam, _, hi_d = ph2.duals(x, t)
    if np.max(hi_d, initial=0.0) > 1e-6 * max(1.0, float(np.max(np.abs(w)))):
        return x, Status.UNBOUNDED, used, f"objective keeps improving up to the box bound {R:g}", lam
    return x, Status.OPTIMAL, used, "", lam


# ---------------------------------------------------------------------------
# KKT check


def _exact_cone(term, x):
    L = np.asarray(term.root, dtype=float)
    n = x.size
    M = L[:, :n]
    q = L @ term.lift(x)
    return M, q


def check_kkt(program: DeterministicProgram, x, active_tol: float = 1e-6, zero_tol: Optional[float] = None):
    """Feasibility and stationarity residuals at x.

    Returns ``(feasibility, stationarity)``.  Feasibility is the largest
    violation among the constraints and ``x >= 0`` (0 when feasible).
    Stationarity is ``||grad f + sum lam_i grad g_i - mu||_inf / max(1,
    ||grad f||_inf)`` minimised over nonnegative multipliers of the active
    constraints and bounds, where f is the objective in minimisation form.
    Cone terms whose argument is (numerically) zero contribute their whole
    subdifferential ``kappa * M' B`` rather than a gradient.

    Parameters
    ----------
    active_tol : float
        Relative slack below which a constraint or bound counts as active.
    zero_tol : float, optional
        Norm below which a cone argument counts as zero.  Defaults to
        ``10 * sqrt(1e-9)``, the smoothing floor of the barrier method.
    """
    x = np.asarray(x, dtype=float)
    n = program.n
    if zero_tol is None:
        zero_tol = 10.0 * math.sqrt(1e-9)
    gvals = program.constraint_values(x)
    feas = max(0.0, float(np.max(gvals, initial=-math.inf)), float(np.max(-x, initial=-math.inf)))

    sign = 1.0 if program.sense is Sense.MINIMIZE else -1.0
    grad0 = sign * np.asarray(program.linear_objective, dtype=float)
    balls = []  # (kappa*M', multiplier index or None)
    if program.cone_objective is not None and program.cone_objective.scale != 0:
        M, q = _exact_cone(program.cone_objective, x)
        kappa = sign * program.cone_objective.scale
        nq = float(np.linalg.norm(q))
        if nq > zero_tol:
            grad0 = grad0 + kappa * (M.T @ q) / nq
        else:
            balls.append((kappa * M.T, None))

    xscale = max(1.0, float(np.max(np.abs(x), initial=0.0)))
    cols = []
    for i, con in enumerate(program.constraints):
        mag = abs(float(con.linear @ x)) + abs(con.offset)
        if con.cone is not None:
            mag += abs(con.cone.value(x))
        if gvals[i] < -active_tol * max(1.0, mag):
            continue
        gi = np.asarray(con.linear, dtype=float).copy()
        if con.cone is not None and con.cone.scale != 0:
            M, q = _exact_cone(con.cone, x)
            nq = float(np.linalg.norm(q))
            if nq > zero_tol:
                gi += con.cone.scale * (M.T @ q) / nq
            else:
                balls.append((con.cone.scale * M.T, len(cols)))
        cols.append(gi)
    for j in range(n):
        if x[j] <= active_tol * xscale:
            e = np.zeros(n)
            e[j] = -1.0
            cols.append(e)

    denom = max(1.0, float(np.max(np.abs(grad0))))
    J = np.array(cols).T.reshape(n, len(cols))
    if not balls:
        if J.shape[1]:
            lam, _ = nnls(J, -grad0)
            r = grad0 + J @ lam
        else:
            r = grad0
        return feas, float(np.max(np.abs(r))) / denom

    # subdifferential balls: multipliers lam >= 0 plus w_b with ||w_b|| <= 1
    # (objective) or ||w_b|| <= lam_i (constraint); a small SOCP, done by SLSQP
    k = J.shape[1]
    sizes = [B.shape[1] for B, _ in balls]
    offsets = np.cumsum([k] + sizes)

    def resid(p):
        r = grad0 + J @ p[:k]
        for (B, _), a, b in zip(balls, offsets[:-1], offsets[1:]):
            r = r + B @ p[a:b]
        return r

    cons = []
    for (B, idx), a, b in zip(balls, offsets[:-1], offsets[1:]):
        if idx is None:
            cons.append({"type": "ineq", "fun": lambda p, a=a, b=b: 1.0 - p[a:b] @ p[a:b]})
        else:
            cons.append({"type": "ineq", "fun": lambda p, a=a, b=b, i=idx: p[i] ** 2 - p[a:b] @ p[a:b]})
    bounds = [(0.0, None)] * k + [(None, None)] * int(sum(sizes))
    p0 = np.zeros(int(offsets[-1]))
    if k:
        p0[:k] = nnls(J, -grad0)[0]
    res = minimize(lambda p: float(resid(p) @ resid(p)), p0, method="SLSQP", bounds=bounds,
                   constraints=cons, options={"ftol": 1e-16, "maxiter": 500})
    p = res.x if np.all(np.isfinite(res.x)) else p0
    return feas, float(np.max(np.abs(resid(p)))) / denom


# ---------------------------------------------------------------------------
# entry point


def solve(program: DeterministicProgram, options: Optional[SolverOptions] = None) -> Solution:
    """Solve a deterministic-equivalent program.

    Pure LPs use :func:`simplex`; anything with a cone term uses the barrier
    method.  ``z_value`` is the plain objective ``c'x`` and ``Z_value`` the
    weighted one, both in the program's own sense.  An "optimal" status is
    only returned when the point passes :func:`check_kkt` at the option
    tolerances; otherwise the status is ``numerical_failure``.
    """
    options = options or SolverOptions()
    n = program.n
    if not program.has_cones:
        sign = 1.0 if program.sense is Sense.MINIMIZE else -1.0
        G = np.array([c.linear for c in program.constraints]).reshape(program.m, n)
        h = -np.array([c.offset for c in program.constraints], dtype=float)
        res = simplex(sign * program.linear_objective, G, h, options.max_iterations)
        x, status, iters, msg, duals = res.x, res.status, res.iterations, res.message, res.duals
    else:
        try:
            x, status, iters, msg, duals = _barrier_solve(program, options)
        except (np.linalg.LinAlgError, FloatingPointError, OverflowError) as exc:
            x, status, iters, msg, duals = None, Status.NUMERICAL_FAILURE, 0, str(exc), None
        if x is None:
            x = np.zeros(n)

    x = np.asarray(x, dtype=float)
    feas, stat = check_kkt(program, x)
    if status is Status.OPTIMAL:
        if feas > options.feasibility_tol:
            status, msg = Status.NUMERICAL_FAILURE, f"constraint violation {feas:.3e} exceeds tolerance"
        elif stat > options.kkt_tol:
            status, msg = Status.NUMERICAL_FAILURE, f"stationarity residual {stat:.3e} exceeds tolerance"
    with np.errstate(invalid="ignore"):
        Z = program.objective(x)
        z = program.plain_value(x)
    x.setflags(write=False)
    return Solution(
        x=x,
        z_value=z,
        Z_value=Z,
        status=status,
        max_constraint_violation=feas,
        kkt_residual=stat,
        iterations=iters,
        duals=duals,
        message=msg,
    )
