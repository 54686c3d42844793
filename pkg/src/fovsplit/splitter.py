"""Recursive Gaussian splitting along region boundaries.

A component is examined on a collocation grid in its whitened position frame.
If every region classifies all grid points the same way, the component is
left alone. Otherwise it is split along the full-state eigenvector best
aligned with the position direction whose grid planes are most often
classified consistently, and the children are examined again.

All components of one recursion level are processed together, so the
output order is: components still mixed at the depth cap, then the
components that stopped at the deepest level, and so on back to level 0.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence, Union as TUnion

import numpy as np

from .gaussmix import EigenBasis, GaussianComponent, GaussianMixture, eigh_desc
from .regions import GridSpec, Region, collocation_grid
from .splitlib import SplitLibrary, SplitParams, lookup

__all__ = [
    "SplitConfig",
    "NoSplit",
    "Split",
    "SplitDecision",
    "SplitInfo",
    "SplitDepthWarning",
    "inclusion_flags",
    "needs_split",
    "position_split_direction",
    "fullstate_split_index",
    "decide",
    "split_component",
    "split_for_fov",
    "split_for_multifov",
    "partition",
]


class SplitDepthWarning(RuntimeWarning):
    """Emitted when recursion stops at ``max_depth`` with mixed components left."""


@dataclass(frozen=True)
class SplitConfig:
    """Splitting parameters.

    Attributes
    ----------
    w_min : float
        Components lighter than this are never split.
    R : int
        Number of children per split.
    lam : float
        Regularizer of the split library entry.
    grid : GridSpec
        Collocation grid used for the inclusion test.
    max_depth : int
        Maximum number of split levels.
    library : SplitLibrary, optional
        Source of split parameters; the shared default library if omitted.
    """

    w_min: float = 0.01
    R: int = 3
    lam: float = 0.001
    grid: GridSpec = field(default_factory=GridSpec)
    max_depth: int = 10
    library: SplitLibrary | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if not 0 < self.w_min < 1:
            raise ValueError("w_min must lie in (0, 1)")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if int(self.R) != self.R or self.R < 2:
            raise ValueError("R must be an integer >= 2")
        if not self.lam >= 0:
            raise ValueError("lam must be >= 0")

    @property
    def params(self) -> SplitParams:
        return lookup(self.library, self.R, self.lam)


@dataclass(frozen=True)
class NoSplit:
    pass


@dataclass(frozen=True)
class Split:
    j_star: int
    k_star: int


SplitDecision = TUnion[NoSplit, Split]


@dataclass
class SplitInfo:
    """Diagnostics of a recursive split."""

    depth: int = 0
    n_splits: int = 0
    hit_max_depth: bool = False
    n_unresolved: int = 0


# vectorized kernels ---------------------------------------------------------

def _grid_world_points(ms, vals, vecs, y):
    """Grid points mapped back to position space, shape (L, G, n_s)."""
    scaled = y[None, :, :] * np.sqrt(vals)[:, None, :]
    return ms[:, None, :] + np.einsum("lgj,lij->lgi", scaled, vecs)


def _flags(regions, pts):
    L, G, n_s = pts.shape
    flat = pts.reshape(-1, n_s)
    return np.stack([r.contains(flat).reshape(L, G) for r in regions])


def _mixed(d):
    """d: (N_reg, L, G) -> (L,) True where some region is mixed."""
    return np.any(np.any(d != d[..., :1], axis=-1), axis=0)


def _plane_scores(d, idx, n_g):
    """Number of consistent planes per direction, shape (L, n_s)."""
    N, L, G = d.shape
    n_s = idx.shape[1]
    scores = np.zeros((L, n_s), dtype=int)
    df = d.astype(float)
    for j in range(n_s):
        onehot = np.zeros((G, n_g))
        onehot[np.arange(G), idx[:, j]] = 1.0
        total = onehot.sum(axis=0)
        inside = df @ onehot
        consistent = (inside == 0) | (inside == total)
        consistent = np.all(consistent, axis=0) & (total > 0)
        scores[:, j] = consistent.sum(axis=-1)
    return scores


def _check_regions(regions, n_s):
    regions = list(regions)
    if not regions:
        raise ValueError("at least one region is required")
    for r in regions:
        if r.dim != n_s:
            raise ValueError(f"region dimension {r.dim} != position dimension {n_s}")
    return regions


# single-component operations ------------------------------------------------

def inclusion_flags(c: GaussianComponent, regions: Sequence[Region], grid: GridSpec,
                    n_s: int | None = None) -> np.ndarray:
    """Region membership of the collocation grid of ``c``.

    Returns
    -------
    ndarray of bool, shape (len(regions), G)
        Row ``i`` holds the membership in ``regions[i]`` of every grid point
        mapped from the whitened frame of ``c`` back into position space.
    """
    if isinstance(regions, Region):
        regions = [regions]
    n_s = regions[0].dim if n_s is None else n_s
    regions = _check_regions(regions, n_s)
    y, _ = collocation_grid(grid, n_s)
    vals, vecs = eigh_desc(c.cov[:n_s, :n_s])
    if vals[-1] <= 0:
        raise ValueError("position covariance is not positive definite")
    pts = _grid_world_points(c.mean[None, :n_s], vals[None], vecs[None], y)
    return _flags(regions, pts)[:, 0, :]


def needs_split(d) -> bool:
    """True when any region classifies the grid points inconsistently."""
    d = np.atleast_2d(np.asarray(d, dtype=bool))
    if d.shape[-1] == 0:
        raise ValueError("empty grid")
    return bool(_mixed(d[:, None, :])[0])


def position_split_direction(d, grid: GridSpec, basis: EigenBasis | None = None) -> int:
    """Index of the whitened axis whose grid planes are most often consistent.

    Ties go to the smallest index, which is the largest-variance eigenvector
    because eigenvalues are stored in descending order. Indices are 0-based.
    """
    d = np.atleast_2d(np.asarray(d, dtype=bool))
    n_s = basis.values.size if basis is not None else None
    if n_s is None:
        for k in (1, 2, 3):
            if collocation_grid(grid, k)[0].shape[0] == d.shape[-1]:
                n_s = k
                break
        else:
            raise ValueError("cannot infer position dimension from flag shape")
    _, idx = collocation_grid(grid, n_s)
    scores = _plane_scores(d[:, None, :], idx, grid.n_g)[0]
    return int(np.argmax(scores))


def fullstate_split_index(basis_full: EigenBasis, v_pos, n_s: int) -> int:
    """Full-state eigenvector index best aligned with a position direction."""
    v_pos = np.asarray(v_pos, dtype=float)
    align = np.abs(v_pos @ basis_full.vectors[:n_s, :])
    return int(np.argmax(align))


def decide(c: GaussianComponent, regions: Sequence[Region], config: SplitConfig,
           n_s: int | None = None) -> SplitDecision:
    """Split decision for one component, ignoring the weight threshold."""
    if isinstance(regions, Region):
        regions = [regions]
    n_s = regions[0].dim if n_s is None else n_s
    d = inclusion_flags(c, regions, config.grid, n_s)
    if not needs_split(d):
        return NoSplit()
    vals, vecs = eigh_desc(c.cov[:n_s, :n_s])
    j = position_split_direction(d, config.grid, EigenBasis(vecs, vals))
    fv, fV = eigh_desc(c.cov)
    k = fullstate_split_index(EigenBasis(fV, fv), vecs[:, j], n_s)
    return Split(j, k)


def _split_arrays(w, m, P, k, params: SplitParams):
    """Split stacked components along full-state eigen indices ``k``.

    Children of component ``i`` occupy rows ``i*R .. i*R+R-1``.
    """
    vals, vecs = eigh_desc(P)
    L = w.size
    lam_k = vals[np.arange(L), k]
    v_k = vecs[np.arange(L), :, k]
    R = params.R
    cw = (w[:, None] * params.weights[None, :]).reshape(-1)
    step = np.sqrt(lam_k)[:, None, None] * params.means[None, :, None] * v_k[:, None, :]
    cm = (m[:, None, :] + step).reshape(L * R, -1)
    dP = ((1.0 - params.sigma ** 2) * lam_k)[:, None, None] * v_k[:, :, None] * v_k[:, None, :]
    Pc = P - dP
    Pc = 0.5 * (Pc + np.swapaxes(Pc, -1, -2))
    cP = np.repeat(Pc, R, axis=0)
    return cw, cm, cP


def split_component(c: GaussianComponent, k: int, params: SplitParams) -> list[GaussianComponent]:
    """Replace ``c`` by ``R`` components along its ``k``-th eigenvector."""
    if not 0 <= k < c.dim:
        raise ValueError(f"eigen index {k} out of range for dim {c.dim}")
    cw, cm, cP = _split_arrays(np.array([c.weight]), c.mean[None], c.cov[None],
                               np.array([k]), params)
    return [GaussianComponent(a, b, p) for a, b, p in zip(cw, cm, cP)]


# recursion ------------------------------------------------------------------

def split_for_multifov(gm: GaussianMixture, config: SplitConfig, regions: Sequence[Region],
                       return_info: bool = False):
    """Refine ``gm`` until no sufficiently heavy component straddles a region boundary.

    Parameters
    ----------
    gm : GaussianMixture
        Input mixture; its ``position_dim`` leading states are tested.
    config : SplitConfig
    regions : sequence of Region
        Regions in position space. The result does not depend on their order.
    return_info : bool, optional
        Also return a :class:`SplitInfo`.

    Returns
    -------
    GaussianMixture or (GaussianMixture, SplitInfo)
        Total weight equals the input total weight.
    """
    n_s = gm.position_dim
    regions = _check_regions(regions, n_s)
    info = SplitInfo()
    if len(gm) == 0:
        return (gm, info) if return_info else gm
    params = config.params
    y, idx = collocation_grid(config.grid, n_s)
    done = []
    w, m, P = gm.w, gm.m, gm.P
    depth = 0
    while w.size:
        heavy = w >= config.w_min
        split_mask = np.zeros(w.size, dtype=bool)
        if np.any(heavy):
            hi = np.flatnonzero(heavy)
            vals, vecs = eigh_desc(P[hi][:, :n_s, :n_s])
            if np.any(vals[:, -1] <= 0):
                raise ValueError("position covariance is not positive definite")
            pts = _grid_world_points(m[hi, :n_s], vals, vecs, y)
            d = _flags(regions, pts)
            mixed = _mixed(d)
            split_mask[hi[mixed]] = True
        if not np.any(split_mask):
            done.append((w, m, P))
            break
        if depth >= config.max_depth:
            info.hit_max_depth = True
            info.n_unresolved = int(split_mask.sum())
            warnings.warn(f"splitting stopped at max_depth={config.max_depth} with "
                          f"{info.n_unresolved} components still straddling a boundary",
                          SplitDepthWarning, stacklevel=2)
            done.append((w, m, P))
            break
        keep = ~split_mask
        done.append((w[keep], m[keep], P[keep]))
        sel = mixed  # rows of hi that split
        d_s = d[:, sel, :]
        vecs_s = vecs[sel]
        j = np.argmax(_plane_scores(d_s, idx, config.grid.n_g), axis=1)
        v_pos = vecs_s[np.arange(j.size), :, j]
        si = np.flatnonzero(split_mask)
        _, fV = eigh_desc(P[si])
        k = np.argmax(np.abs(np.einsum("li,lik->lk", v_pos, fV[:, :n_s, :])), axis=1)
        w, m, P = _split_arrays(w[si], m[si], P[si], k, params)
        info.n_splits += si.size
        depth += 1
    info.depth = depth
    done.reverse()
    out = GaussianMixture(np.concatenate([a[0] for a in done]),
                          np.concatenate([a[1] for a in done]),
                          np.concatenate([a[2] for a in done]),
                          position_dim=n_s, normalized=gm.normalized, validate=False)
    return (out, info) if return_info else out


def split_for_fov(gm: GaussianMixture, config: SplitConfig, S: Region,
                  return_info: bool = False):
    """Single-region form of :func:`split_for_multifov`."""
    return split_for_multifov(gm, config, [S], return_info=return_info)


def partition(gm: GaussianMixture, S: Region):
    """Split a mixture into the components whose position mean lies in ``S`` and the rest.

    Boundary means count as inside. Both parts keep the input order.
    """
    if len(gm) == 0:
        return gm, gm
    inside = np.asarray(S.contains(gm.position_means), dtype=bool)
    return gm[inside], gm[~inside]
