"""Linear SPD solves and monotone iteration between a sub- and a supersolution."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import expr as ex
from .eigen import LaplacianOperator, assemble_laplacian
from .errors import MonotonicityBroken, NoConvergence
from .linalg import FactorizedSPD, conjugate_gradient
from .problem import ProblemSpec, ScalarField, sample_boundary

SHIFT_HEADROOM = 1.1
SHIFT_SAMPLES = 64


def spd_solve(L: LaplacianOperator, rhs, shift=0.0, tol: float = 1e-10, method: str = "cg") -> ScalarField:
    """Solve ``(L + shift) u = rhs`` on the mask of ``L`` (zero Dirichlet data).

    ``rhs`` is a ScalarField on ``L.mask`` or an array over the mask nodes.
    ``method="cg"`` gives relative residual <= tol; ``"direct"`` factorises.
    """
    b = rhs.values[L.indices] if isinstance(rhs, ScalarField) else np.asarray(rhs, dtype=float)
    shift = np.broadcast_to(np.asarray(shift, dtype=float), b.shape)
    if np.any(shift < 0):
        raise ValueError("shift must be non-negative")
    if method == "cg":
        A = L.matrix + _diag(shift)
        x, _ = conjugate_gradient(A, b, tol=tol)
    elif method == "direct":
        x = FactorizedSPD(L.matrix, shift).solve(b)
    else:
        raise ValueError(f"unknown method {method!r}")
    values = np.zeros(L.grid.size)
    values[L.indices] = x
    return ScalarField(L.mask, values)


def _diag(v):
    import scipy.sparse as sp
    return sp.diags(v)


@dataclass
class SolveResult:
    u: ScalarField
    iterations: int
    residual: float
    monotone_violations: int
    branch: str
    shift: float
    error: float = float("nan")
    history: list = field(default_factory=list, repr=False)


class _Nodes:
    """Interior-node data shared by the iterations."""

    def __init__(self, p, grid):
        self.grid = grid
        inner = grid.interior
        self.idx = np.flatnonzero(inner)
        self.L = assemble_laplacian(grid, grid.mask(inner))
        pts = grid.coords[inner]
        self.env = {"x": pts[:, 0], "y": pts[:, 1] if grid.dimension == 2 else np.zeros(len(pts)),
                    "d": grid.d[inner]}
        self.lam_m = p.lam * ex.evaluate(p.m, self.env)
        self.a = ex.evaluate(p.a, self.env)
        self.g = sample_boundary(p.g, grid)
        self.bnd = grid.boundary
        self.b_g = self.L.dirichlet_rhs(self.g)
        self.f = p.f

    def f_at(self, u):
        return ex.evaluate(self.f, self.env, u=u)

    def shift_bound(self, lo, hi, samples=SHIFT_SAMPLES):
        """1.1 * max |lambda m - a df/du| over u in [lo, hi] per node (sampled)."""
        t = np.linspace(0.0, 1.0, samples)
        us = lo[:, None] + (hi - lo)[:, None] * t[None, :]
        env = {k: np.repeat(v[:, None], samples, axis=1) for k, v in self.env.items()}
        df = ex.derivative_u(self.f, env, u=us)
        q = np.abs(self.lam_m[:, None] - self.a[:, None] * df)
        return SHIFT_HEADROOM * q.max(axis=1)

    def step(self, solver, shift, u):
        ui = u[self.idx]
        rhs = (shift + self.lam_m) * ui - self.a * self.f_at(ui) + self.b_g
        new = u.copy()
        new[self.idx] = solver.solve(rhs)
        new[self.bnd] = self.g[self.bnd]
        return new


def residual(p: ProblemSpec, u: ScalarField) -> float:
    """max |(-Δ_h u) - λ m u + a f(x,u)| over interior nodes plus max |u - g| on the boundary."""
    grid = u.grid
    nodes = _Nodes(p, grid)
    ui = u.values[nodes.idx]
    defect = nodes.L.apply(u.values) - nodes.lam_m * ui + nodes.a * nodes.f_at(ui)
    bnd = grid.boundary
    return float(np.abs(defect).max() + np.abs(u.values[bnd] - nodes.g[bnd]).max())


class _Shift:
    """Per-node shift, refactorised only when the admissible shift has dropped a lot."""

    def __init__(self, nodes, factor):
        self.nodes = nodes
        self.factor = factor
        self.current = None
        self.solver = None

    def update(self, lo, hi):
        need = self.factor * self.nodes.shift_bound(lo, hi)
        if (self.current is None or np.any(need > self.current)
                or need.sum() < 0.5 * self.current.sum()):
            self.current = need
            self.solver = FactorizedSPD(self.nodes.L.matrix, need)
        return self.solver


def _bracket(p, lower, upper, tol, max_iters, factor, want):
    """Iterate from below and above in lock-step.

    The shift at each step dominates the nonlinearity on the current bracket
    [below_k, above_k]; both sequences stay sub/supersolutions, so the
    bracket only shrinks and the shift can decrease with it.
    """
    grid = upper.grid
    nodes = _Nodes(p, grid)
    closure = grid.closure
    idx = nodes.idx
    below = lower.values.copy()
    above = upper.values.copy()
    slack = 1e-10 * max(np.abs(above[closure]).max(), np.abs(below[closure]).max(), 1e-300)
    shift = _Shift(nodes, factor)
    lo_bound, hi_bound = lower.values[closure], upper.values[closure]
    state = {b: {"iters": 0, "violations": 0, "done": False, "history": []} for b in ("from_below", "from_above")}
    for k in range(1, max_iters + 1):
        solver = shift.update(below[idx], above[idx])
        new = {"from_below": nodes.step(solver, shift.current, below),
               "from_above": nodes.step(solver, shift.current, above)}
        old = {"from_below": below, "from_above": above}
        for b, u_new in new.items():
            st = state[b]
            if st["done"]:
                continue
            diff = u_new[closure] - old[b][closure]
            backwards = -diff if b == "from_above" else diff
            # from_above must not increase, from_below must not decrease
            breach = (-backwards > slack) | (u_new[closure] < lo_bound - slack) | (u_new[closure] > hi_bound + slack)
            if np.any(-backwards > 10 * slack):
                raise MonotonicityBroken(f"{b} iterate moved the wrong way by {float((-backwards).max()):.3g}")
            st["violations"] += int(np.count_nonzero(breach))
            st["iters"] = k
            step = float(np.abs(diff).max())
            st["history"].append(step)
            if step <= tol:
                st["done"] = True
        below, above = new["from_below"], new["from_above"]
        if all(state[b]["done"] for b in want):
            break
    else:
        raise NoConvergence("monotone iteration", max_iters)
    final = {"from_below": below, "from_above": above}
    out = {}
    for b in want:
        u = ScalarField(grid.closure_mask(), final[b])
        st = state[b]
        out[b] = SolveResult(u, st["iters"], residual(p, u), st["violations"], b,
                             float(shift.current.max()), history=st["history"])
    return out


def _solve_pair(p, lower, upper, tol, max_iters, want):
    try:
        return _bracket(p, lower, upper, tol, max_iters, 1.0, want)
    except MonotonicityBroken:
        return _bracket(p, lower, upper, tol, max_iters, 4.0, want)


def monotone_iterate(p: ProblemSpec, lower: ScalarField, upper: ScalarField, branch: str = "from_above",
                     tol: float = 1e-10, max_iters: int = 100_000) -> SolveResult:
    """Monotone iteration u_{k+1} = (-Δ_h + M)^{-1}[(M + λm) u_k - a f(x, u_k)] with data g.

    ``lower``/``upper`` must be an ordered sub/supersolution pair. Starting
    from ``upper`` the iterates decrease, from ``lower`` they increase; the
    run stops when successive iterates differ by at most ``tol``. A wrong-way
    step beyond 10x the ordering slack triggers one retry with a 4x shift.
    """
    if branch not in ("from_above", "from_below"):
        raise ValueError(f"unknown branch {branch!r}")
    return _solve_pair(p, lower, upper, tol, max_iters, (branch,))[branch]


def solve_both(p, lower, upper, tol=1e-10, max_iters=100_000):
    """Both branches from one bracketed run; returns ``(from_above, from_below)``."""
    out = _solve_pair(p, lower, upper, tol, max_iters, ("from_above", "from_below"))
    return out["from_above"], out["from_below"]


def _laplacian_of_expr(e, env, dim, step=1e-3):
    """Fourth-order centred approximation of Δe, at a step far below the grid spacing."""
    total = 0.0
    names = ("x", "y")[:dim]
    for name in names:
        base = env[name]
        vals = [ex.evaluate(e, env, **{name: base + k * step}) for k in (-2, -1, 0, 1, 2)]
        total = total + (-vals[0] + 16 * vals[1] - 30 * vals[2] + 16 * vals[3] - vals[4]) / (12 * step ** 2)
    return total


def mms_solve(p: ProblemSpec, grid, u_star, tol: float = 1e-12, max_iters: int = 100_000) -> SolveResult:
    """Solve the problem with an added forcing that makes ``u_star`` the exact solution.

    For manufactured-solution convergence tests only; the forcing term is
    not part of the model. Returns the discrete solution with ``error`` set
    to ``max |u - u_star|`` over interior nodes.
    """
    if isinstance(u_star, str):
        u_star = ex.parse(u_star)
    if ex.free_variables(u_star) - {"x", "y"}:
        raise ValueError("manufactured solution may only depend on x and y")
    nodes = _Nodes(p, grid)
    idx = nodes.idx
    exact = ex.evaluate(u_star, nodes.env)
    forcing = (-_laplacian_of_expr(u_star, nodes.env, grid.dimension)
               - nodes.lam_m * exact + nodes.a * nodes.f_at(exact))
    bnd = grid.boundary
    pts = grid.nearest[bnd]
    g = np.zeros(grid.size)
    g[bnd] = ex.evaluate(u_star, {"x": pts[:, 0], "y": pts[:, 1] if grid.dimension == 2 else np.zeros(len(pts))})
    b_g = nodes.L.dirichlet_rhs(g)

    lo, hi = float(exact.min()), float(exact.max())
    width = max(hi - lo, 1.0)
    shift = nodes.shift_bound(np.full(len(idx), lo - 0.1 * width), np.full(len(idx), hi + 0.1 * width))
    solver = FactorizedSPD(nodes.L.matrix, shift)
    u = g.copy()
    history = []
    for k in range(1, max_iters + 1):
        ui = u[idx]
        new_i = solver.solve((shift + nodes.lam_m) * ui - nodes.a * nodes.f_at(ui) + forcing + b_g)
        step = float(np.abs(new_i - ui).max())
        history.append(step)
        u[idx] = new_i
        if step <= tol:
            break
    else:
        raise NoConvergence("manufactured-solution iteration", max_iters)
    field_u = ScalarField(grid.closure_mask(), u)
    defect = nodes.L.apply(u) - nodes.lam_m * u[idx] + nodes.a * nodes.f_at(u[idx]) - forcing
    res = float(np.abs(defect).max())
    err = float(np.abs(u[idx] - exact).max())
    return SolveResult(field_u, k, res, 0, "mms", float(shift.max()), err, history)
