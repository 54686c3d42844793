"""Closed regions of position space with exact indicator functions.

Every region is closed: boundary points classify as inside. Regions are
immutable values and ``contains`` is vectorized over an ``(N, d)`` array of
points. Component frames map position vectors into the whitened coordinates
of a Gaussian component, where the collocation grid lives.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .gaussmix import EigenBasis, GaussianComponent, eig_decompose

__all__ = [
    "Region",
    "Box",
    "Disc",
    "Polygon",
    "HalfSpace",
    "Union",
    "Intersection",
    "Complement",
    "whole_space",
    "empty_region",
    "contains",
    "region_from_dict",
    "GridSpec",
    "ComponentFrame",
    "to_frame",
    "transformed_contains",
    "collocation_points",
    "collocation_grid",
]

# polygon edges within this distance (relative to polygon size) count as boundary
_POLY_EDGE_TOL = 1e-12


class Region:
    """Base class. Subclasses implement ``_contains(points) -> bool array``."""

    dim: int

    def contains(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts)
        if pts.shape[-1] != self.dim:
            raise ValueError(f"point dimension {pts.shape[-1]} != region dimension {self.dim}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points must be finite")
        out = self._contains(pts)
        return bool(out[0]) if single else out

    def _contains(self, pts):
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError

    def __invert__(self):
        return Complement(self)

    def __or__(self, other):
        return Union([self, other])

    def __and__(self, other):
        return Intersection([self, other])


def _vec(x):
    return np.atleast_1d(np.asarray(x, dtype=float))


@dataclass(frozen=True, eq=False)
class Box(Region):
    """Axis-aligned box ``lo <= s <= hi``."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo, hi = _vec(self.lo), _vec(self.hi)
        if lo.shape != hi.shape:
            raise ValueError("box bounds differ in shape")
        if np.any(lo > hi):
            raise ValueError("box requires lo <= hi componentwise")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def centered(cls, center, size):
        c = _vec(center)
        half = 0.5 * np.broadcast_to(_vec(size), c.shape)
        return cls(c - half, c + half)

    @property
    def dim(self):
        return self.lo.size

    @property
    def center(self):
        return 0.5 * (self.lo + self.hi)

    def translated(self, offset):
        off = _vec(offset)
        return Box(self.lo + off, self.hi + off)

    def _contains(self, pts):
        return np.all((pts >= self.lo) & (pts <= self.hi), axis=-1)

    def to_dict(self):
        return {"type": "box", "lo": self.lo.tolist(), "hi": self.hi.tolist()}


@dataclass(frozen=True, eq=False)
class Disc(Region):
    """Closed ball ``||s - center|| <= radius`` (a disc in the plane)."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", _vec(self.center))
        if not self.radius > 0:
            raise ValueError("disc radius must be positive")
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def dim(self):
        return self.center.size

    def _contains(self, pts):
        d = pts - self.center
        return np.einsum("ij,ij->i", d, d) <= self.radius ** 2

    def to_dict(self):
        return {"type": "disc", "center": self.center.tolist(), "radius": self.radius}


@dataclass(frozen=True, eq=False)
class HalfSpace(Region):
    """``{s : normal . s >= offset}``."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        n = _vec(self.normal)
        if not np.any(n):
            raise ValueError("half-space normal must be nonzero")
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "offset", float(self.offset))

    @property
    def dim(self):
        return self.normal.size

    def _contains(self, pts):
        return pts @ self.normal >= self.offset

    def to_dict(self):
        return {"type": "halfspace", "normal": self.normal.tolist(), "offset": self.offset}


def _segments_intersect(p1, p2, q1, q2):
    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        return 0 if v == 0 else (1 if v > 0 else -1)

    def on_seg(a, b, c):
        return (min(a[0], b[0]) <= c[0] <= max(a[0], b[0])
                and min(a[1], b[1]) <= c[1] <= max(a[1], b[1]))

    o1, o2 = orient(p1, p2, q1), orient(p1, p2, q2)
    o3, o4 = orient(q1, q2, p1), orient(q1, q2, p2)
    if o1 != o2 and o3 != o4:
        return True
    return ((o1 == 0 and on_seg(p1, p2, q1)) or (o2 == 0 and on_seg(p1, p2, q2))
            or (o3 == 0 and on_seg(q1, q2, p1)) or (o4 == 0 and on_seg(q1, q2, p2)))


@dataclass(frozen=True, eq=False)
class Polygon(Region):
    """Simple closed polygon in the plane, interior plus boundary.

    Membership uses the even-odd crossing rule with a half-open vertex
    convention; points within a relative 1e-12 of an edge count as inside.
    """

    vertices: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2:
            raise ValueError("polygon vertices must have shape (V, 2)")
        if np.allclose(v[0], v[-1]) and len(v) > 3:
            v = v[:-1]
        if len(v) < 3:
            raise ValueError("polygon needs at least 3 vertices")
        n = len(v)
        for i in range(n):
            for j in range(i + 1, n):
                if j == i + 1 or (i == 0 and j == n - 1):
                    continue
                if _segments_intersect(v[i], v[(i + 1) % n], v[j], v[(j + 1) % n]):
                    raise ValueError("polygon is not simple")
        object.__setattr__(self, "vertices", v)

    @property
    def dim(self):
        return 2

    def _contains(self, pts):
        v = self.vertices
        a = v
        b = np.roll(v, -1, axis=0)
        x = pts[:, 0:1]
        y = pts[:, 1:2]
        ay, by = a[None, :, 1], b[None, :, 1]
        ax, bx = a[None, :, 0], b[None, :, 0]
        straddle = (ay > y) != (by > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xcross = ax + (y - ay) * (bx - ax) / (by - ay)
        crossings = np.count_nonzero(straddle & (x < xcross), axis=1)
        inside = (crossings % 2) == 1
        # boundary: distance to the nearest edge
        e = b - a
        ee = np.einsum("ij,ij->i", e, e)
        t = np.clip(((pts[:, None, :] - a[None]) * e[None]).sum(-1) / ee, 0.0, 1.0)
        proj = a[None] + t[..., None] * e[None]
        dist2 = ((pts[:, None, :] - proj) ** 2).sum(-1).min(axis=1)
        scale = max(np.abs(v).max(), 1.0)
        return inside | (dist2 <= (_POLY_EDGE_TOL * scale) ** 2)

    def to_dict(self):
        return {"type": "polygon", "vertices": self.vertices.tolist()}


def _infer_dim(regions, dim):
    dims = {r.dim for r in regions}
    if len(dims) > 1:
        raise ValueError(f"regions have mixed dimensions {sorted(dims)}")
    if dims:
        d = dims.pop()
        if dim is not None and dim != d:
            raise ValueError("explicit dim disagrees with member regions")
        return d
    if dim is None:
        raise ValueError("dim is required for an empty region list")
    return int(dim)


class Union(Region):
    """Union of regions; the empty union is the empty set."""

    def __init__(self, regions: Sequence[Region], dim: int | None = None):
        self.regions = tuple(regions)
        self.dim = _infer_dim(self.regions, dim)

    def _contains(self, pts):
        out = np.zeros(len(pts), dtype=bool)
        for r in self.regions:
            out |= r._contains(pts)
        return out

    def to_dict(self):
        return {"type": "union", "dim": self.dim, "regions": [r.to_dict() for r in self.regions]}

    def __repr__(self):
        return f"Union({list(self.regions)!r})"


class Intersection(Region):
    """Intersection of regions; the empty intersection is the whole space."""

    def __init__(self, regions: Sequence[Region], dim: int | None = None):
        self.regions = tuple(regions)
        self.dim = _infer_dim(self.regions, dim)

    def _contains(self, pts):
        out = np.ones(len(pts), dtype=bool)
        for r in self.regions:
            out &= r._contains(pts)
        return out

    def to_dict(self):
        return {"type": "intersection", "dim": self.dim,
                "regions": [r.to_dict() for r in self.regions]}

    def __repr__(self):
        return f"Intersection({list(self.regions)!r})"


class Complement(Region):
    """Set complement. Note the complement of a closed set is open; the
    indicator here is simply the negation, which is all the splitter needs."""

    def __init__(self, region: Region):
        self.region = region
        self.dim = region.dim

    def _contains(self, pts):
        return ~self.region._contains(pts)

    def to_dict(self):
        return {"type": "complement", "region": self.region.to_dict()}

    def __repr__(self):
        return f"Complement({self.region!r})"


def empty_region(dim: int) -> Region:
    return Union([], dim=dim)


def whole_space(dim: int) -> Region:
    return Complement(empty_region(dim))


def contains(region: Region, s) -> bool | np.ndarray:
    """Indicator of ``region`` at a point (or rows of an array of points)."""
    return region.contains(s)


def region_from_dict(d: dict) -> Region:
    """Build a region from its JSON form, e.g. ``{"type": "disc", ...}``."""
    kind = d.get("type")
    if kind == "box":
        return Box(d["lo"], d["hi"])
    if kind == "disc":
        return Disc(d["center"], d["radius"])
    if kind == "polygon":
        return Polygon(d["vertices"])
    if kind == "halfspace":
        return HalfSpace(d["normal"], d["offset"])
    if kind == "union":
        return Union([region_from_dict(r) for r in d.get("regions", [])], dim=d.get("dim"))
    if kind == "intersection":
        return Intersection([region_from_dict(r) for r in d.get("regions", [])],
                            dim=d.get("dim"))
    if kind == "complement":
        return Complement(region_from_dict(d["region"]))
    if kind == "empty":
        return empty_region(int(d["dim"]))
    if kind == "whole":
        return whole_space(int(d["dim"]))
    raise ValueError(f"unknown region type {kind!r}")


@dataclass(frozen=True)
class GridSpec:
    """Collocation lattice: ``n_g`` points per axis on ``[-zeta, zeta]``,
    keeping only points within ``zeta`` of the origin."""

    zeta: float = 3.0
    n_g: int = 7

    def __post_init__(self):
        if not self.zeta > 0:
            raise ValueError("grid bound zeta must be positive")
        if int(self.n_g) != self.n_g or self.n_g < 2:
            raise ValueError("n_g must be an integer >= 2")


@lru_cache(maxsize=64)
def _grid(zeta, n_g, n_s):
    axis = -zeta + 2.0 * zeta * np.arange(n_g) / (n_g - 1)
    idx = np.array(list(itertools.product(range(n_g), repeat=n_s)), dtype=int)
    pts = axis[idx]
    keep = np.linalg.norm(pts, axis=1) <= zeta * (1 + 1e-12)
    pts, idx = pts[keep], idx[keep]
    pts.setflags(write=False)
    idx.setflags(write=False)
    return pts, idx


def collocation_grid(spec: GridSpec, n_s: int):
    """Points ``(G, n_s)`` and their lattice indices ``(G, n_s)``, lexicographic order."""
    if n_s not in (1, 2, 3):
        raise ValueError("collocation grids support n_s in {1, 2, 3}")
    return _grid(float(spec.zeta), int(spec.n_g), int(n_s))


def collocation_points(spec: GridSpec, n_s: int) -> np.ndarray:
    return collocation_grid(spec, n_s)[0]


@dataclass(frozen=True, eq=False)
class ComponentFrame:
    """Whitening frame ``y = Lambda^{-1/2} V^T (s - mean_s)`` of a component."""

    mean_s: np.ndarray
    basis: EigenBasis

    def forward(self, s):
        s = np.asarray(s, dtype=float)
        return ((s - self.mean_s) @ self.basis.vectors) / np.sqrt(self.basis.values)

    def inverse(self, y):
        y = np.asarray(y, dtype=float)
        return self.mean_s + (y * np.sqrt(self.basis.values)) @ self.basis.vectors.T


def to_frame(c: GaussianComponent, n_s: int) -> ComponentFrame:
    """Frame in which the position marginal of ``c`` is standard normal."""
    if not 1 <= n_s <= c.dim:
        raise ValueError(f"n_s={n_s} out of range for dim {c.dim}")
    try:
        basis = eig_decompose(c.cov[:n_s, :n_s])
    except ValueError as exc:
        raise ValueError(f"position covariance is singular or invalid: {exc}") from exc
    return ComponentFrame(c.mean[:n_s].copy(), basis)


def transformed_contains(region: Region, frame: ComponentFrame, y):
    """Indicator of the region mapped into ``frame``, evaluated at ``y``."""
    return region.contains(frame.inverse(y))
