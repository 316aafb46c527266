"""Domains, uniform grids, node classification and region masks.

Supported shapes are intervals (N=1) and rectangles, disks and annuli
(N=2). Signed distances are closed form for each shape: negative inside,
zero on the boundary, positive outside.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyRegion, GridMismatch, GridTooCoarse

EXTERIOR, INTERIOR, BOUNDARY = 0, 1, 2

_SHAPES = {"interval": 2, "rectangle": 4, "disk": 3, "annulus": 4}


@dataclass(frozen=True)
class DomainSpec:
    """Geometry of the domain.

    ``params`` depends on ``kind``:

    - interval:  (x0, x1)
    - rectangle: (x0, x1, y0, y1)
    - disk:      (cx, cy, radius)
    - annulus:   (cx, cy, r_inner, r_outer)
    """

    kind: str
    params: tuple

    def __post_init__(self):
        if self.kind not in _SHAPES:
            raise ValueError(f"unknown domain shape {self.kind!r}")
        params = tuple(float(p) for p in self.params)
        if len(params) != _SHAPES[self.kind]:
            raise ValueError(f"{self.kind} takes {_SHAPES[self.kind]} parameters, got {len(params)}")
        if not all(math.isfinite(p) for p in params):
            raise ValueError("domain parameters must be finite")
        object.__setattr__(self, "params", params)
        p = params
        if self.kind == "interval" and not p[1] > p[0]:
            raise ValueError("interval needs x1 > x0")
        if self.kind == "rectangle" and not (p[1] > p[0] and p[3] > p[2]):
            raise ValueError("rectangle needs x1 > x0 and y1 > y0")
        if self.kind == "disk" and not p[2] > 0:
            raise ValueError("disk needs radius > 0")
        if self.kind == "annulus" and not (p[3] > p[2] > 0):
            raise ValueError("annulus needs r_outer > r_inner > 0")

    @classmethod
    def interval(cls, x0, x1):
        return cls("interval", (x0, x1))

    @classmethod
    def rectangle(cls, x0, x1, y0, y1):
        return cls("rectangle", (x0, x1, y0, y1))

    @classmethod
    def disk(cls, cx, cy, radius):
        return cls("disk", (cx, cy, radius))

    @classmethod
    def annulus(cls, cx, cy, r_inner, r_outer):
        return cls("annulus", (cx, cy, r_inner, r_outer))

    @property
    def dimension(self) -> int:
        return 1 if self.kind == "interval" else 2

    @property
    def bbox(self):
        """(lower corner, upper corner) of the tightest axis-aligned box."""
        p = self.params
        if self.kind == "interval":
            return (p[0],), (p[1],)
        if self.kind == "rectangle":
            return (p[0], p[2]), (p[1], p[3])
        r = p[2] if self.kind == "disk" else p[3]
        return (p[0] - r, p[1] - r), (p[0] + r, p[1] + r)

    @property
    def inradius(self) -> float:
        """Largest distance from a point of the domain to its boundary."""
        p = self.params
        if self.kind == "interval":
            return (p[1] - p[0]) / 2
        if self.kind == "rectangle":
            return min(p[1] - p[0], p[3] - p[2]) / 2
        if self.kind == "disk":
            return p[2]
        return (p[3] - p[2]) / 2

    def __str__(self):
        return f"{self.kind}({', '.join(repr(v) for v in self.params)})"


def parse_domain(text: str) -> DomainSpec:
    """Parse ``"disk(0, 0, 1)"``-style text into a :class:`DomainSpec`."""
    text = text.strip()
    if "(" not in text or not text.endswith(")"):
        raise ValueError(f"malformed domain {text!r}; expected e.g. interval(0, 1)")
    name, _, rest = text.partition("(")
    try:
        params = tuple(float(v) for v in rest[:-1].split(","))
    except ValueError:
        raise ValueError(f"malformed domain parameters in {text!r}") from None
    return DomainSpec(name.strip(), params)


def _as_points(spec, point):
    pts = np.asarray(point, dtype=float)
    if spec.dimension == 1:
        return pts.reshape(-1, 1) if pts.ndim < 2 else pts
    return pts.reshape(-1, 2)


def signed_distance(spec: DomainSpec, point):
    """Exact signed distance to the boundary of ``spec``.

    ``point`` may be a single point or an ``(n, N)`` array; a single point
    returns a float, an array returns an array of length ``n``.
    """
    scalar = np.ndim(point) == 0 or (spec.dimension == 2 and np.ndim(point) == 1)
    pts = _as_points(spec, point)
    p = spec.params
    if spec.kind == "interval":
        x = pts[:, 0]
        sd = np.maximum(p[0] - x, x - p[1])
    elif spec.kind == "rectangle":
        cx, cy = (p[0] + p[1]) / 2, (p[2] + p[3]) / 2
        qx = np.abs(pts[:, 0] - cx) - (p[1] - p[0]) / 2
        qy = np.abs(pts[:, 1] - cy) - (p[3] - p[2]) / 2
        outside = np.hypot(np.maximum(qx, 0.0), np.maximum(qy, 0.0))
        sd = outside + np.minimum(np.maximum(qx, qy), 0.0)
    else:
        r = np.hypot(pts[:, 0] - p[0], pts[:, 1] - p[1])
        if spec.kind == "disk":
            sd = r - p[2]
        else:
            sd = np.maximum(p[2] - r, r - p[3])
    return float(sd[0]) if scalar else sd


def nearest_boundary_point(spec: DomainSpec, point):
    """Closest point of the boundary to each of ``point`` (``(n, N)`` array)."""
    pts = _as_points(spec, point).copy()
    p = spec.params
    if spec.kind == "interval":
        x = pts[:, 0]
        pts[:, 0] = np.where(np.abs(x - p[0]) <= np.abs(x - p[1]), p[0], p[1])
        return pts
    if spec.kind == "rectangle":
        x = np.clip(pts[:, 0], p[0], p[1])
        y = np.clip(pts[:, 1], p[2], p[3])
        inside = (pts[:, 0] > p[0]) & (pts[:, 0] < p[1]) & (pts[:, 1] > p[2]) & (pts[:, 1] < p[3])
        gaps = np.stack([x - p[0], p[1] - x, y - p[2], p[3] - y])
        side = np.argmin(gaps, axis=0)
        x = np.where(inside & (side == 0), p[0], np.where(inside & (side == 1), p[1], x))
        y = np.where(inside & (side == 2), p[2], np.where(inside & (side == 3), p[3], y))
        return np.stack([x, y], axis=1)
    c = np.array(p[:2])
    rel = pts - c
    r = np.hypot(rel[:, 0], rel[:, 1])
    unit = np.where(r[:, None] > 0, rel / np.where(r > 0, r, 1.0)[:, None], np.array([1.0, 0.0]))
    if spec.kind == "disk":
        radius = np.full_like(r, p[2])
    else:
        radius = np.where(np.abs(r - p[2]) <= np.abs(r - p[3]), p[2], p[3])
    return c + unit * radius[:, None]


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform Cartesian grid over the padded bounding box of a domain.

    Nodes are stored flat in C order. Node ``i`` along axis ``k`` sits at
    ``bbox_lo[k] + (i - pad) * h`` so grids with different padding share
    the same lattice.
    """

    spec: DomainSpec
    h: float
    pad: int
    shape: tuple
    coords: np.ndarray = field(repr=False)
    sd: np.ndarray = field(repr=False)
    kind: np.ndarray = field(repr=False)
    nearest: np.ndarray = field(repr=False)

    @property
    def dimension(self) -> int:
        return self.spec.dimension

    @property
    def size(self) -> int:
        return self.coords.shape[0]

    @property
    def d(self):
        """Unsigned distance to the boundary at every node."""
        return np.abs(self.sd)

    @property
    def interior(self):
        return self.kind == INTERIOR

    @property
    def boundary(self):
        return self.kind == BOUNDARY

    @property
    def closure(self):
        return self.kind != EXTERIOR

    @property
    def strides(self):
        return tuple(int(s) for s in np.cumprod((self.shape[1:] + (1,))[::-1])[::-1])

    def mask(self, nodes) -> "RegionMask":
        return RegionMask(self, np.asarray(nodes, dtype=bool))

    def interior_mask(self) -> "RegionMask":
        return self.mask(self.interior)

    def closure_mask(self) -> "RegionMask":
        return self.mask(self.closure)

    def same_lattice(self, other: "Grid") -> bool:
        return self.spec == other.spec and self.h == other.h

    def embed(self, pad: int) -> "Grid":
        """The same lattice with ``pad`` nodes of padding on every side."""
        return build_grid(self.spec, self.h, pad=pad)

    def index_into(self, other: "Grid"):
        """Flat index in ``other`` of each node of ``self`` (same lattice, larger pad)."""
        if not self.same_lattice(other) or other.pad < self.pad:
            raise GridMismatch("target grid must share the lattice and have at least as much padding")
        shift = other.pad - self.pad
        multi = np.unravel_index(np.arange(self.size), self.shape)
        return np.ravel_multi_index(tuple(m + shift for m in multi), other.shape)

    def locate(self, node: int):
        """Coordinates of a node as a plain tuple (for reports)."""
        return tuple(float(c) for c in self.coords[node])


def build_grid(spec: DomainSpec, h: float, pad: int = 2) -> Grid:
    """Build and classify a uniform grid of spacing ``h``.

    Interior nodes have signed distance below ``-h/2``; nodes within
    ``h/2`` of the boundary are boundary nodes and carry Dirichlet data
    taken at their nearest boundary point. Every neighbour of an interior
    node is then interior or boundary.
    """
    h = float(h)
    if not h > 0 or not math.isfinite(h):
        raise ValueError("grid spacing must be positive")
    lo, hi = spec.bbox
    counts = [int(math.ceil((b - a) / h - 1e-9)) + 1 + 2 * pad for a, b in zip(lo, hi)]
    axes = [a + (np.arange(n) - pad) * h for a, n in zip(lo, counts)]
    mesh = np.meshgrid(*axes, indexing="ij")
    coords = np.stack([m.ravel() for m in mesh], axis=1)
    sd = signed_distance(spec, coords)
    slack = 1e-9 * h
    kind = np.full(sd.shape, EXTERIOR, dtype=np.int8)
    kind[np.abs(sd) <= h / 2 + slack] = BOUNDARY
    kind[sd < -h / 2 - slack] = INTERIOR
    if not np.any(kind == INTERIOR):
        raise GridTooCoarse(f"no interior node for {spec} at h={h}")
    nearest = nearest_boundary_point(spec, coords)
    for arr in (coords, sd, kind, nearest):
        arr.setflags(write=False)
    return Grid(spec, h, pad, tuple(counts), coords, sd, kind, nearest)


@dataclass(frozen=True, eq=False)
class RegionMask:
    grid: Grid
    nodes: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.nodes.shape != (self.grid.size,):
            raise ValueError("mask length must match the grid")

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.nodes))

    @property
    def indices(self):
        return np.flatnonzero(self.nodes)

    def _check(self, other):
        if other.grid is not self.grid:
            raise GridMismatch("masks live on different grids")

    def __and__(self, other):
        self._check(other)
        return RegionMask(self.grid, self.nodes & other.nodes)

    def __or__(self, other):
        self._check(other)
        return RegionMask(self.grid, self.nodes | other.nodes)

    def __sub__(self, other):
        self._check(other)
        return RegionMask(self.grid, self.nodes & ~other.nodes)

    def issubset(self, other) -> bool:
        self._check(other)
        return not np.any(self.nodes & ~other.nodes)


def tubular_mask(spec: DomainSpec, grid: Grid, eps: float, side: str = "both") -> RegionMask:
    """Nodes strictly within ``eps`` of the boundary.

    ``side="both"`` gives the full tubular neighbourhood (it reaches outside
    the domain, so use a grid padded by at least ``eps``); ``"inside_only"``
    keeps the part in the closed domain.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    sd = signed_distance(spec, grid.coords) if spec != grid.spec else grid.sd
    nodes = np.abs(sd) < eps - 1e-9 * grid.h
    if side == "inside_only":
        nodes &= sd <= 0
    elif side != "both":
        raise ValueError(f"side must be 'both' or 'inside_only', not {side!r}")
    return RegionMask(grid, nodes)


def measure(mask: RegionMask) -> float:
    """Cell-counting estimate of the Lebesgue measure: count * h**N."""
    if mask.count == 0:
        raise EmptyRegion("cannot measure an empty region")
    return mask.count * mask.grid.h ** mask.grid.dimension
