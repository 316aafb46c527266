"""Problem data, nodal fields and numerical checks of the standing hypotheses."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import expr as ex
from .domain import DomainSpec, Grid, RegionMask
from .errors import DomainError, GridMismatch, ValidationFailed


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Nodal values on the nodes of ``mask``.

    ``values`` spans the whole grid; entries outside the mask are zero and
    carry no meaning.
    """

    mask: RegionMask
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        vals[~self.mask.nodes] = 0.0
        if not np.all(np.isfinite(vals)):
            raise ValueError("field values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def grid(self) -> Grid:
        return self.mask.grid

    @classmethod
    def constant(cls, mask, value):
        return cls(mask, np.full(mask.grid.size, float(value)))

    def _other(self, other):
        if isinstance(other, ScalarField):
            if other.mask.grid is not self.grid or not np.array_equal(other.mask.nodes, self.mask.nodes):
                raise GridMismatch("fields live on different masks")
            return other.values
        return float(other)

    def __add__(self, other):
        return ScalarField(self.mask, self.values + self._other(other))

    def __sub__(self, other):
        return ScalarField(self.mask, self.values - self._other(other))

    def __mul__(self, other):
        return ScalarField(self.mask, self.values * self._other(other))

    __radd__ = __add__
    __rmul__ = __mul__

    def on_mask(self):
        return self.values[self.mask.nodes]

    def min(self):
        return float(self.on_mask().min())

    def max(self):
        return float(self.on_mask().max())

    def norm_inf(self):
        return float(np.abs(self.on_mask()).max())


@dataclass(frozen=True)
class ProblemSpec:
    """Data of  -Δu = λ m u - a f(x,u) in Ω,  u = g on ∂Ω."""

    domain: DomainSpec
    lam: float
    m: ex.Expr
    a: ex.Expr
    g: ex.Expr
    f: ex.Expr

    def __post_init__(self):
        for name in ("m", "a", "g"):
            extra = ex.free_variables(getattr(self, name)) - {"x", "y", "d"}
            if extra:
                raise ValueError(f"{name} may only use x, y, d (found {', '.join(sorted(extra))})")
        object.__setattr__(self, "lam", float(self.lam))

    @classmethod
    def from_strings(cls, domain, lam, m="1", a="d", g="1", f="u^2"):
        return cls(domain, lam, ex.parse(m), ex.parse(a), ex.parse(g), ex.parse(f))

    def with_lambda(self, lam):
        return ProblemSpec(self.domain, lam, self.m, self.a, self.g, self.f)


def _bindings(grid, nodes, points=None, boundary=False):
    pts = grid.coords[nodes] if points is None else points
    env = {"x": pts[:, 0], "y": pts[:, 1] if grid.dimension == 2 else np.zeros(len(pts))}
    env["d"] = np.zeros(len(pts)) if boundary else grid.d[nodes]
    return env


def _evaluate_at(e, grid, nodes, env, what):
    try:
        return ex.evaluate(e, env)
    except DomainError as err:
        # re-run node by node to name the first failing location
        for k, node in enumerate(np.flatnonzero(nodes)):
            try:
                ex.evaluate(e, {key: v[k] for key, v in env.items()})
            except DomainError:
                raise DomainError(f"{err} while evaluating {what} at {grid.locate(node)}") from None
        raise


def sample_field(e: ex.Expr, grid: Grid, mask: RegionMask, u=None) -> ScalarField:
    """Evaluate ``e`` at the nodes of ``mask`` with ``d = |signed distance|``.

    ``u`` (a field or array over the grid) is bound when given.
    """
    if mask.grid is not grid:
        raise GridMismatch("mask belongs to another grid")
    nodes = mask.nodes
    env = _bindings(grid, nodes)
    if u is not None:
        uv = u.values if isinstance(u, ScalarField) else np.asarray(u, dtype=float)
        env["u"] = uv[nodes]
    values = np.zeros(grid.size)
    values[nodes] = _evaluate_at(e, grid, nodes, env, ex.to_source(e))
    return ScalarField(mask, values)


def sample_boundary(e: ex.Expr, grid: Grid) -> np.ndarray:
    """Values of ``e`` for every boundary node, taken at its nearest boundary point (d = 0)."""
    nodes = grid.boundary
    env = _bindings(grid, nodes, points=grid.nearest[nodes], boundary=True)
    out = np.zeros(grid.size)
    out[nodes] = _evaluate_at(e, grid, nodes, env, ex.to_source(e))
    return out


@dataclass
class HypothesisCheck:
    name: str
    passed: bool
    worst: float
    witness: tuple
    detail: str = ""


@dataclass
class ValidationReport:
    checks: list
    seed: int
    samples: int

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failed(self):
        return [c for c in self.checks if not c.passed]


def _worst(values, nodes_idx, grid, points=None):
    k = int(np.argmin(values))
    loc = tuple(float(c) for c in (points[k] if points is not None else grid.coords[nodes_idx[k]]))
    return float(values[k]), loc


def validate_problem(p: ProblemSpec, grid: Grid, samples: int = 64, seed: int = 0,
                     raise_on_failure: bool = True) -> ValidationReport:
    """Check the structural hypotheses on m, a, g and f by sampling.

    ``a`` is checked on every node of the closed domain; the hypotheses on
    ``f`` are checked on ``samples`` random interior nodes paired with
    random ``u`` values in [0.01, 10]. Superlinearity is a falsification
    test: ``f(x, 2**j u) / 2**j`` must strictly increase for j = 1..20
    (reaching ``inf`` counts as growth).
    """
    if grid.spec != p.domain:
        raise GridMismatch("grid was built for a different domain")
    rng = np.random.default_rng(seed)
    checks = []

    inner = grid.interior
    inner_idx = np.flatnonzero(inner)
    bnd_idx = np.flatnonzero(grid.boundary)
    bnd_pts = grid.nearest[bnd_idx]

    a_in = ex.evaluate(p.a, _bindings(grid, inner))
    a_bd = sample_boundary(p.a, grid)[bnd_idx]
    scale = max(1.0, float(np.max(np.abs(a_in))))

    # a >= 0 on the closed domain
    vals = np.concatenate([a_in, a_bd])
    worst, loc = _worst(vals, np.concatenate([inner_idx, bnd_idx]), grid)
    checks.append(HypothesisCheck("a_nonnegative", worst >= 0, worst, loc))

    # a vanishes on the boundary
    tol = 1e-12 * scale
    k = int(np.argmax(np.abs(a_bd)))
    checks.append(HypothesisCheck("a_zero_on_boundary", bool(abs(a_bd[k]) <= tol), float(abs(a_bd[k])),
                                  tuple(float(c) for c in bnd_pts[k]), f"tolerance {tol:.3g}"))

    # a > 0 away from the boundary (every interior node, i.e. d >= h/2)
    worst, loc = _worst(a_in, inner_idx, grid)
    checks.append(HypothesisCheck("a_positive_inside", worst > 0, worst, loc, f"tested on d >= {grid.h / 2:g}"))

    # m is bounded on the closed domain
    closure = grid.closure
    m_all = _evaluate_at(p.m, grid, closure, _bindings(grid, closure), "m")
    bad = ~np.isfinite(m_all)
    k = int(np.argmax(bad)) if bad.any() else int(np.argmax(np.abs(m_all)))
    checks.append(HypothesisCheck("m_bounded", not bad.any(), float(np.abs(m_all[k])),
                                  grid.locate(np.flatnonzero(closure)[k])))

    g_bd = sample_boundary(p.g, grid)[bnd_idx]
    worst, loc = _worst(g_bd, bnd_idx, grid, points=bnd_pts)
    checks.append(HypothesisCheck("g_nonnegative", worst >= 0, worst, loc))
    k = int(np.argmax(g_bd))
    checks.append(HypothesisCheck("g_not_identically_zero", bool(g_bd[k] > 0), float(g_bd[k]),
                                  tuple(float(c) for c in bnd_pts[k])))

    picks = rng.choice(inner_idx, size=samples, replace=True)
    us = np.exp(rng.uniform(np.log(0.01), np.log(10.0), size=samples))
    env = _bindings(grid, picks)

    f0 = ex.evaluate(p.f, env, u=np.zeros(samples))
    worst, loc = _worst(-np.abs(f0), picks, grid)
    checks.append(HypothesisCheck("f_zero_at_zero", worst == 0, -worst, loc))

    fu = ex.evaluate(p.f, env, u=us)
    worst, loc = _worst(fu, picks, grid)
    checks.append(HypothesisCheck("f_positive", worst > 0, worst, loc))

    dfu = ex.derivative_u(p.f, env, u=us)
    worst, loc = _worst(dfu, picks, grid)
    checks.append(HypothesisCheck("f_increasing", worst > 0, worst, loc))

    ratios = []
    for j in range(0, 21):
        k = 2.0 ** j
        ratios.append(ex.evaluate(p.f, env, u=k * us) / k)
    ratios = np.array(ratios)
    with np.errstate(invalid="ignore"):
        steps = np.where(np.isinf(ratios[1:]), np.inf, ratios[1:] - ratios[:-1])
    growth = steps.min(axis=0)
    worst, loc = _worst(growth, picks, grid)
    checks.append(HypothesisCheck("f_superlinear", worst > 0, worst, loc,
                                  "f(x, 2^j u)/2^j must strictly increase for j = 1..20"))

    report = ValidationReport(checks, seed, samples)
    if raise_on_failure and not report.passed:
        raise ValidationFailed(report)
    return report
