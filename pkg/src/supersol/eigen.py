"""Discrete Dirichlet Laplacian, principal eigenpairs and the Faber-Krahn bound."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy import ndimage

from .domain import Grid, RegionMask
from .errors import EmptyRegion, NoConvergence, UnsupportedDimension
from .linalg import FactorizedSPD, conjugate_gradient
from .problem import ScalarField


@dataclass(frozen=True, eq=False)
class LaplacianOperator:
    """Second-order stencil for -Δ on the nodes of ``mask``.

    ``stencil`` maps a full-grid vector to (-Δ_h u) at the mask nodes, so
    values outside the mask enter as Dirichlet data. ``matrix`` is its
    restriction to mask columns, i.e. the operator with zero data.
    """

    mask: RegionMask
    stencil: sp.csr_matrix = field(repr=False)
    matrix: sp.csr_matrix = field(repr=False)

    @property
    def grid(self) -> Grid:
        return self.mask.grid

    @property
    def h(self) -> float:
        return self.mask.grid.h

    @property
    def indices(self):
        return self.mask.indices

    def apply(self, u):
        """(-Δ_h u) at mask nodes; ``u`` is a ScalarField or a full-grid array."""
        values = u.values if isinstance(u, ScalarField) else np.asarray(u, dtype=float)
        return self.stencil @ values

    def dirichlet_rhs(self, data):
        """Right-hand side contribution of boundary data given as a full-grid array."""
        outside = np.where(self.mask.nodes, 0.0, np.asarray(data, dtype=float))
        return -(self.stencil @ outside)


def assemble_laplacian(grid: Grid, mask: RegionMask) -> LaplacianOperator:
    """Assemble the (2N+1)-point stencil ``(2N u_i - sum of neighbours) / h^2``."""
    if mask.count == 0:
        raise EmptyRegion("Laplacian needs at least one unknown")
    idx = mask.indices
    n = len(idx)
    multi = np.unravel_index(idx, grid.shape)
    strides = grid.strides
    inv_h2 = 1.0 / grid.h ** 2
    rows = [np.arange(n)]
    cols = [idx]
    vals = [np.full(n, 2 * grid.dimension * inv_h2)]
    for axis in range(grid.dimension):
        for step in (-1, 1):
            pos = multi[axis] + step
            ok = (pos >= 0) & (pos < grid.shape[axis])
            rows.append(np.flatnonzero(ok))
            cols.append(idx[ok] + step * strides[axis])
            vals.append(np.full(int(ok.sum()), -inv_h2))
    stencil = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, grid.size)
    )
    matrix = stencil[:, idx].tocsr()
    return LaplacianOperator(mask, stencil, matrix)


@dataclass
class EigenPair:
    sigma: float
    phi: ScalarField
    residual: float
    iterations: int


def principal_eigenpair(L: LaplacianOperator, tol: float = 1e-10, max_iters: int = 10_000,
                        solver: str = "direct") -> EigenPair:
    """Smallest eigenvalue and its eigenfunction by inverse power iteration.

    Each step solves an SPD system (``solver="direct"`` factorises once,
    ``"cg"`` runs conjugate gradients per step). The eigenvalue is the
    Rayleigh quotient; iteration stops when it changes by at most
    ``tol * sigma`` and ``||L phi - sigma phi||_inf <= tol * sigma`` (with a
    floor at the level of rounding in the stencil). The eigenfunction is
    sign-fixed and scaled to maximum 1.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    A = L.matrix
    if solver == "direct":
        fact = FactorizedSPD(A)
        solve = fact.solve
    elif solver == "cg":
        def solve(b):
            return conjugate_gradient(A, b, tol=1e-13)[0]
    else:
        raise ValueError(f"unknown solver {solver!r}")

    floor = 64 * np.finfo(float).eps * abs(A).sum(axis=1).max()
    x = np.ones(A.shape[0]) / math.sqrt(A.shape[0])
    sigma_old = float(x @ (A @ x))
    for it in range(1, max_iters + 1):
        y = solve(x)
        x = y / np.linalg.norm(y)
        Ax = A @ x
        sigma = float(x @ Ax)
        res = np.abs(Ax - sigma * x).max() / np.abs(x).max()
        if abs(sigma - sigma_old) <= tol * sigma and res <= max(tol * sigma, floor):
            break
        sigma_old = sigma
    else:
        raise NoConvergence("inverse power iteration", max_iters)

    if x.sum() < 0:
        x = -x
    x = x / x.max()
    values = np.zeros(L.grid.size)
    values[L.indices] = x
    residual = float(np.abs(A @ x - sigma * x).max())
    return EigenPair(sigma, ScalarField(L.mask, values), residual, it)


def connected_components(mask: RegionMask):
    """Split a mask into stencil-connected components, ordered by first node."""
    grid = mask.grid
    labels, count = ndimage.label(mask.nodes.reshape(grid.shape))
    labels = labels.ravel()
    return [RegionMask(grid, labels == k) for k in range(1, count + 1)]


def component_eigenpairs(mask: RegionMask, tol: float = 1e-10, max_iters: int = 10_000):
    """Principal eigenpair of each connected component of ``mask``.

    The principal eigenvalue of the whole mask is the smallest of them.
    """
    return [principal_eigenpair(assemble_laplacian(mask.grid, comp), tol, max_iters)
            for comp in connected_components(mask)]


def bessel_j0(x: float) -> float:
    """J0 from its power series (adequate for |x| < 10)."""
    term = 1.0
    total = 1.0
    q = (x / 2.0) ** 2
    k = 0
    while abs(term) > 1e-18 * max(1.0, abs(total)):
        k += 1
        term *= -q / (k * k)
        total += term
    return total


def first_bessel_zero() -> float:
    """First positive zero of J0 by bisection on [2, 3]."""
    lo, hi = 2.0, 3.0
    flo = bessel_j0(lo)
    while hi - lo > 4 * np.finfo(float).eps * hi:
        mid = 0.5 * (lo + hi)
        fm = bessel_j0(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


J01 = first_bessel_zero()

BALL_MEASURE = {1: 2.0, 2: math.pi, 3: 4.0 * math.pi / 3.0}


def ball_eigenvalue(N: int) -> float:
    """Principal Dirichlet eigenvalue of -Δ on the unit ball of R^N."""
    if N == 1:
        return math.pi ** 2 / 4
    if N == 2:
        return J01 ** 2
    if N == 3:
        return math.pi ** 2
    raise UnsupportedDimension(f"no ball eigenvalue for N={N}")


@dataclass(frozen=True)
class FaberKrahnEstimate:
    dimension: int
    ball_eigenvalue: float
    ball_measure: float
    region_measure: float
    bound: float


def faber_krahn_bound(N: int, region_measure: float) -> FaberKrahnEstimate:
    """Lower bound sigma_1(B_1) |B_1|^(2/N) / |D|^(2/N) for any D with the given measure."""
    if not region_measure > 0:
        raise ValueError("region measure must be positive")
    sigma_ball = ball_eigenvalue(N)
    ball = BALL_MEASURE[N]
    bound = sigma_ball * ball ** (2 / N) / region_measure ** (2 / N)
    return FaberKrahnEstimate(N, sigma_ball, ball, float(region_measure), bound)
