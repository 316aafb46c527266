"""Pointwise sub/supersolution and ordering checks.

This module only depends on the grid, the expression evaluator and the
Laplacian stencil, so it can audit any field without trusting the code
that produced it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import expr as ex
from .eigen import assemble_laplacian
from .errors import GridMismatch

PASS, FAIL = "PASS", "FAIL"


@dataclass
class CheckReport:
    kind: str
    worst_interior_margin: float
    worst_interior_at: tuple
    worst_boundary_margin: float
    worst_boundary_at: tuple
    interior_threshold: float
    boundary_threshold: float
    tol: float
    verdict: str
    strict: bool
    interior_margins: np.ndarray = field(default=None, repr=False)

    @property
    def passed(self) -> bool:
        return self.verdict == PASS


def default_tolerance(p, u) -> float:
    """10 h^2 max(1, ||u||_inf (|lambda| ||m||_inf + 1))."""
    grid = u.grid
    closure = grid.closure
    m = _coefficient(p.m, grid, closure)
    scale = max(1.0, float(np.abs(u.values[closure]).max()) * (abs(p.lam) * float(np.abs(m).max()) + 1.0))
    return 10.0 * grid.h ** 2 * scale


def _coefficient(e, grid, nodes):
    pts = grid.coords[nodes]
    env = {"x": pts[:, 0], "y": pts[:, 1] if grid.dimension == 2 else np.zeros(len(pts)),
           "d": np.abs(grid.sd[nodes])}
    return ex.evaluate(e, env)


def _boundary_data(p, grid):
    nodes = grid.boundary
    pts = grid.nearest[nodes]
    env = {"x": pts[:, 0], "y": pts[:, 1] if grid.dimension == 2 else np.zeros(len(pts)),
           "d": np.zeros(len(pts))}
    return ex.evaluate(p.g, env)


def _require_closure(u):
    grid = u.grid
    if not np.all(u.mask.nodes[grid.closure]):
        raise GridMismatch("field must be defined on every interior and boundary node")


def pde_defect(p, u):
    """(-Δ_h u) - λ m u + a f(x, u) at each interior node, plus the node indices."""
    _require_closure(u)
    grid = u.grid
    inner = grid.interior
    L = assemble_laplacian(grid, grid.mask(inner))
    ui = u.values[inner]
    pts = grid.coords[inner]
    env = {"x": pts[:, 0], "y": pts[:, 1] if grid.dimension == 2 else np.zeros(len(pts)),
           "d": np.abs(grid.sd[inner])}
    m = ex.evaluate(p.m, env)
    a = ex.evaluate(p.a, env)
    f = ex.evaluate(p.f, env, u=ui)
    return L.apply(u.values) - p.lam * m * ui + a * f, np.flatnonzero(inner)


def _report(kind, grid, inner_margin, inner_idx, bnd_margin, bnd_idx, tol):
    ki = int(np.argmin(inner_margin))
    kb = int(np.argmin(bnd_margin))
    wi, wb = float(inner_margin[ki]), float(bnd_margin[kb])
    passed = wi >= -tol and wb >= 0.0
    full = np.zeros(grid.size)
    full[inner_idx] = inner_margin
    return CheckReport(kind, wi, grid.locate(inner_idx[ki]), wb, grid.locate(bnd_idx[kb]),
                       -tol, 0.0, tol, PASS if passed else FAIL, bool(wi > 0 and wb > 0), full)


def check_supersolution(p, u, tol=None) -> CheckReport:
    """Interior margin (-Δ_h u) - λmu + a f(x,u) >= -tol and u >= g on the boundary."""
    tol = default_tolerance(p, u) if tol is None else float(tol)
    grid = u.grid
    margin, inner_idx = pde_defect(p, u)
    bnd_idx = np.flatnonzero(grid.boundary)
    bmargin = u.values[bnd_idx] - _boundary_data(p, grid)
    return _report("supersolution", grid, margin, inner_idx, bmargin, bnd_idx, tol)


def check_subsolution(p, u, tol=None) -> CheckReport:
    """Reversed inequalities: defect <= tol inside and u <= g on the boundary."""
    tol = default_tolerance(p, u) if tol is None else float(tol)
    grid = u.grid
    margin, inner_idx = pde_defect(p, u)
    bnd_idx = np.flatnonzero(grid.boundary)
    bmargin = _boundary_data(p, grid) - u.values[bnd_idx]
    return _report("subsolution", grid, -margin, inner_idx, bmargin, bnd_idx, tol)


def check_ordering(lower, upper) -> CheckReport:
    """PASS iff lower < upper at every interior and boundary node."""
    if lower.grid is not upper.grid:
        raise GridMismatch("fields live on different grids")
    _require_closure(lower)
    _require_closure(upper)
    grid = lower.grid
    gap = upper.values - lower.values
    inner_idx = np.flatnonzero(grid.interior)
    bnd_idx = np.flatnonzero(grid.boundary)
    gi, gb = gap[inner_idx], gap[bnd_idx]
    ki, kb = int(np.argmin(gi)), int(np.argmin(gb))
    wi, wb = float(gi[ki]), float(gb[kb])
    ok = wi > 0 and wb > 0
    return CheckReport("ordering", wi, grid.locate(inner_idx[ki]), wb, grid.locate(bnd_idx[kb]),
                       0.0, 0.0, 0.0, PASS if ok else FAIL, ok)
