"""Construction of a strictly positive supersolution K*Phi.

Near the boundary Phi is the principal eigenfunction of the tubular
neighbourhood O_eps; deeper inside it is blended into a positive constant,
and K is chosen large enough for the supersolution inequality to hold at
every node.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import verify
from .domain import Grid, RegionMask, measure, tubular_mask
from .eigen import EigenPair, FaberKrahnEstimate, assemble_laplacian, component_eigenpairs, faber_krahn_bound
from .errors import DegenerateBand, EpsilonNotFound, KSearchDiverged, NotNondegenerate
from .expr import evaluate
from .problem import ProblemSpec, ScalarField, sample_boundary, sample_field, validate_problem

EPS_MARGIN = 0.05
K_MARGIN = 1.05
MAX_DOUBLINGS = 60


@dataclass(eq=False)
class Collar:
    eps: float
    sigma_eps: float
    fk: FaberKrahnEstimate
    certify_with: str
    max_lambda_m: float
    o_eps: RegionMask = field(repr=False)
    eigenpairs: list = field(repr=False)
    phi: np.ndarray = field(repr=False)
    collar: RegionMask = field(repr=False)
    band: RegionMask = field(repr=False)
    core: RegionMask = field(repr=False)

    @property
    def grid(self) -> Grid:
        return self.collar.grid


def _max_lambda_m(p, grid):
    m = sample_field(p.m, grid, grid.closure_mask())
    return float((p.lam * m.on_mask()).max())


def select_epsilon(p: ProblemSpec, grid: Grid, certify_with: str = "computed",
                   eig_tol: float = 1e-10) -> Collar:
    """Halve eps from a quarter of the inradius until sigma_eps clears max(lambda m).

    The test quantity is the computed principal eigenvalue of O_eps or,
    with ``certify_with="faber_krahn"``, the Faber-Krahn lower bound from
    the measure of O_eps. It must exceed ``max(lambda m) + 5% |max(lambda m)|``.
    """
    if certify_with not in ("computed", "faber_krahn"):
        raise ValueError(f"certify_with must be 'computed' or 'faber_krahn', not {certify_with!r}")
    h = grid.h
    target = _max_lambda_m(p, grid)
    threshold = target + EPS_MARGIN * abs(target)
    eps = p.domain.inradius / 4
    while True:
        if eps < 4 * h:
            raise EpsilonNotFound(
                f"no eps >= 4h={4 * h:g} makes sigma_eps exceed max(lambda m)={target:g}; refine the grid")
        ext = grid.embed(int(math.ceil(eps / h)) + 2)
        o_eps = tubular_mask(p.domain, ext, eps, "both")
        fk = faber_krahn_bound(grid.dimension, measure(o_eps))
        pairs = None
        if certify_with == "computed":
            pairs = component_eigenpairs(o_eps, eig_tol)
            test = min(e.sigma for e in pairs)
        else:
            test = fk.bound
        if test > threshold:
            if pairs is None:
                pairs = component_eigenpairs(o_eps, eig_tol)
            return _make_collar(p, grid, eps, o_eps, pairs, fk, certify_with, target)
        eps /= 2


def _make_collar(p, grid, eps, o_eps, pairs, fk, certify_with, max_lm):
    ext = o_eps.grid
    phi_ext = np.zeros(ext.size)
    for pair in pairs:
        phi_ext += pair.phi.values
    phi = phi_ext[grid.index_into(ext)]
    slack = 1e-9 * grid.h
    d = grid.d
    collar = grid.boundary | (grid.interior & (d <= eps / 2 + slack))
    band = grid.interior & ~collar & (d <= 0.75 * eps + slack)
    core = grid.interior & ~collar & ~band
    sigma = min(e.sigma for e in pairs)
    return Collar(eps, sigma, fk, certify_with, max_lm, o_eps, pairs, phi,
                  grid.mask(collar), grid.mask(band), grid.mask(core))


def cutoff(s):
    """Quintic step from 1 at s=0 to 0 at s=1, flat to second order at both ends."""
    s = np.clip(s, 0.0, 1.0)
    return 1.0 - s ** 3 * (10.0 - 15.0 * s + 6.0 * s ** 2)


def blend_phi(collar: Collar, grid: Grid):
    """Phi = eigenfunction on the collar, a cutoff blend on the band, constant c on the core.

    ``c`` is the smallest eigenfunction value over the band, so every blended
    value is a convex combination of two positive numbers. Returns
    ``(Phi, tau)`` with ``tau`` the positive floor of Phi away from the collar.
    """
    if collar.grid is not grid:
        raise ValueError("collar was built on another grid")
    if collar.band.count == 0:
        raise DegenerateBand(f"no grid node in the blend band for eps={collar.eps:g}, h={grid.h:g}")
    eps = collar.eps
    phi = collar.phi
    band = collar.band.nodes
    c = float(phi[band].min())
    values = np.zeros(grid.size)
    values[collar.collar.nodes] = phi[collar.collar.nodes]
    s = (grid.d[band] - eps / 2) / (eps / 4)
    chi = cutoff(s)
    values[band] = chi * phi[band] + (1.0 - chi) * c
    values[collar.core.nodes] = c
    tau = min(c, float(values[band].min()))
    return ScalarField(grid.closure_mask(), values), tau


def smallest_K(condition, what="K"):
    """Smallest K > 0 (to 1e-12 relative) with ``condition(K)`` true, by doubling then bisection."""
    if condition(1.0):
        lo, hi = 0.0, 1.0
    else:
        lo, hi = 1.0, 2.0
        doublings = 1
        while not condition(hi):
            lo, hi = hi, 2.0 * hi
            doublings += 1
            if doublings > MAX_DOUBLINGS:
                raise KSearchDiverged(f"{what} search exceeded {MAX_DOUBLINGS} doublings; f may not be superlinear")
    for _ in range(200):
        if hi - lo <= 1e-12 * hi:
            break
        mid = 0.5 * (lo + hi)
        if condition(mid):
            hi = mid
        else:
            lo = mid
    return hi


def interior_condition(lap_phi, phi, lam_m, a, f_of):
    """Build ``K -> all(a f(x, K Phi)/K >= Δ_h Phi + λ m Phi)``.

    ``lap_phi`` holds (-Δ_h Phi); ``f_of(v)`` evaluates f at the same nodes.
    The inequality is kept multiplied through by ``a`` so it stays defined
    where ``a`` is tiny.
    """
    rhs = -lap_phi + lam_m * phi

    def condition(K):
        with np.errstate(over="ignore", invalid="ignore"):
            lhs = a * f_of(K * phi) / K
        return bool(np.all(lhs >= rhs))

    return condition


@dataclass
class KChoice:
    K: float
    K_boundary: float
    K_interior: float


def select_K(p: ProblemSpec, collar: Collar, Phi: ScalarField, tau: float) -> KChoice:
    """Choose K from the boundary ratio max(g/Phi) and the pointwise interior inequality
    on band and core nodes; K = 1.05 max(K_boundary, K_interior, 1)."""
    grid = Phi.grid
    if Phi.min() <= 0 or tau <= 0:
        raise ValueError("Phi must be strictly positive")
    bnd = grid.boundary
    g = sample_boundary(p.g, grid)
    K_boundary = float((g[bnd] / Phi.values[bnd]).max())

    deep = collar.band.nodes | collar.core.nodes
    L = assemble_laplacian(grid, grid.interior_mask())
    lap = L.apply(Phi)
    inner = np.flatnonzero(grid.interior)
    sel = deep[inner]
    nodes = inner[sel]
    deep_mask = grid.mask(deep)
    m = sample_field(p.m, grid, deep_mask).values[nodes]
    a = sample_field(p.a, grid, deep_mask).values[nodes]
    env = {"x": grid.coords[nodes, 0],
           "y": grid.coords[nodes, 1] if grid.dimension == 2 else np.zeros(len(nodes)),
           "d": grid.d[nodes]}
    phi = Phi.values[nodes]

    def f_of(v):
        return evaluate(p.f, env, u=v)

    condition = interior_condition(lap[sel], phi, p.lam * m, a, f_of)
    K_interior = smallest_K(condition, "K_interior") if len(nodes) else 0.0
    K = K_MARGIN * max(K_boundary, K_interior, 1.0)
    if len(nodes) and not condition(K):
        raise KSearchDiverged("interior inequality is not monotone in K for this f")
    return KChoice(K, K_boundary, K_interior)


def constant_supersolution_nondegenerate(p: ProblemSpec, grid: Grid, gamma: float) -> float:
    """Constant supersolution for weights bounded below by ``gamma > 0``.

    K must dominate g and satisfy a f(x, K)/K >= lambda m at every node.
    Raises NotNondegenerate when ``min a < gamma``, which is always the case
    for a weight vanishing on the boundary.
    """
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    closure = grid.closure_mask()
    a_nodes = sample_field(p.a, grid, closure).values
    a_bd = sample_boundary(p.a, grid)
    a_all = np.concatenate([a_nodes[grid.interior], a_bd[grid.boundary]])
    if a_all.min() < gamma:
        raise NotNondegenerate(f"min a = {a_all.min():g} < gamma = {gamma:g}")
    inner = grid.interior
    m = sample_field(p.m, grid, grid.interior_mask()).values[inner]
    a = a_nodes[inner]
    env = {"x": grid.coords[inner, 0],
           "y": grid.coords[inner, 1] if grid.dimension == 2 else np.zeros(int(inner.sum())),
           "d": grid.d[inner]}
    ones = np.ones(int(inner.sum()))

    def f_of(v):
        return evaluate(p.f, env, u=v)

    K_search = smallest_K(interior_condition(np.zeros_like(ones), ones, p.lam * m, a, f_of), "K")
    g_max = float(sample_boundary(p.g, grid)[grid.boundary].max())
    return K_MARGIN * max(K_search, g_max, 1.0)


@dataclass(eq=False)
class SupersolutionCertificate:
    Phi: ScalarField
    tau: float
    K: float
    K_boundary: float
    K_interior: float
    interior_margin: ScalarField
    boundary_margin: float
    collar: Collar
    check: verify.CheckReport
    status: str

    @property
    def passed(self) -> bool:
        return self.status == "PASS"

    @property
    def supersolution(self) -> ScalarField:
        return self.Phi * self.K


def supersolution_margins(p: ProblemSpec, U: ScalarField):
    """K*(-Δ_h Phi) - λ m KPhi + a f(x, KPhi) at interior nodes (full-grid array)
    and min(U - g) over the boundary."""
    grid = U.grid
    inner = grid.interior_mask()
    L = assemble_laplacian(grid, inner)
    m = sample_field(p.m, grid, inner).values
    a = sample_field(p.a, grid, inner).values
    f = sample_field(p.f, grid, inner, u=U).values
    margins = np.zeros(grid.size)
    idx = inner.indices
    margins[idx] = L.apply(U) - p.lam * m[idx] * U.values[idx] + a[idx] * f[idx]
    g = sample_boundary(p.g, grid)
    bnd = grid.boundary
    return ScalarField(inner, margins), float((U.values[bnd] - g[bnd]).min())


def build_certificate(p: ProblemSpec, grid: Grid, certify_with: str = "computed", validate: bool = True,
                      samples: int = 64, seed: int = 0, tol=None, eig_tol: float = 1e-10
                      ) -> SupersolutionCertificate:
    """Run validation, eps selection, blending and K selection, then audit K*Phi.

    The status is PASS only when the minimum interior margin is >= 0, the
    boundary margin is > 0 and the independent checker agrees.
    """
    if validate:
        validate_problem(p, grid, samples=samples, seed=seed)
    collar = select_epsilon(p, grid, certify_with, eig_tol)
    Phi, tau = blend_phi(collar, grid)
    choice = select_K(p, collar, Phi, tau)
    U = Phi * choice.K
    margins, bmargin = supersolution_margins(p, U)
    check = verify.check_supersolution(p, U, tol)
    ok = margins.on_mask().min() >= 0 and bmargin > 0 and check.passed
    return SupersolutionCertificate(Phi, tau, choice.K, choice.K_boundary, choice.K_interior,
                                    margins, bmargin, collar, check, "PASS" if ok else "FAILED")
