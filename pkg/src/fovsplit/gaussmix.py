"""Gaussian mixture containers and the linear algebra shared by the package.

Mixtures are stored as stacked arrays (weights ``w`` of shape ``(L,)``,
means ``m`` of shape ``(L, n)`` and covariances ``P`` of shape ``(L, n, n)``)
so that classification and splitting can be vectorized over components.
Position states always occupy the leading ``position_dim`` entries.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

__all__ = [
    "GaussianComponent",
    "GaussianMixture",
    "EigenBasis",
    "eig_decompose",
    "eigh_desc",
    "gaussian_overlap",
    "l2_distance",
    "merge_moments",
    "reduce",
    "runnalls_cost",
    "mixture_moments",
    "position_marginal",
    "sample",
    "pdf",
]

SYM_RTOL = 1e-10
PRUNE_WEIGHT = 1e-8


def _symmetrize(P):
    return 0.5 * (P + np.swapaxes(P, -1, -2))


@dataclass(frozen=True, eq=False)
class GaussianComponent:
    """A single weighted Gaussian ``weight * N(x; mean, cov)``."""

    weight: float
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if mean.ndim != 1 or cov.shape != (mean.size, mean.size):
            raise ValueError(f"mean {mean.shape} and cov {cov.shape} are inconsistent")
        if not (np.isfinite(self.weight) and self.weight >= 0):
            raise ValueError(f"component weight must be finite and >= 0, got {self.weight}")
        _check_spd(cov)
        object.__setattr__(self, "weight", float(self.weight))
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.size


def _check_spd(P):
    """Raise ValueError unless every matrix in ``P`` is symmetric positive definite."""
    P = np.asarray(P, dtype=float)
    if not np.all(np.isfinite(P)):
        raise ValueError("covariance has non-finite entries")
    scale = np.maximum(np.abs(P).max(axis=(-1, -2), initial=0.0), 1e-300)
    asym = np.abs(P - np.swapaxes(P, -1, -2)).max(axis=(-1, -2), initial=0.0)
    if np.any(asym > SYM_RTOL * scale):
        raise ValueError("covariance is not symmetric")
    if P.size and np.any(np.linalg.eigvalsh(_symmetrize(P))[..., 0] <= 0):
        raise ValueError("covariance is not positive definite")


class GaussianMixture:
    """Weighted sum of Gaussians over an ``n``-dimensional state.

    Parameters
    ----------
    w : array_like, shape (L,)
        Nonnegative component weights.
    m : array_like, shape (L, n)
        Component means, position states first.
    P : array_like, shape (L, n, n)
        Component covariances (symmetric positive definite).
    position_dim : int, optional
        Number of leading position states ``n_s``. Defaults to ``n``.
    normalized : bool, optional
        Whether the weights are meant to sum to one. Partitioned mixtures are
        legitimately sub-normalized and should pass ``False``.
    validate : bool, optional
        Check weights and covariances. Internal callers that construct
        mixtures from already validated pieces switch this off.
    """

    __slots__ = ("w", "m", "P", "position_dim", "normalized")

    def __init__(self, w, m, P, position_dim=None, normalized=False, validate=True):
        w = np.asarray(w, dtype=float).reshape(-1)
        m = np.asarray(m, dtype=float)
        P = np.asarray(P, dtype=float)
        if m.ndim == 1:
            m = m.reshape(w.size, -1)
        if P.ndim == 2 and w.size == 1:
            P = P[None]
        dim = m.shape[1] if m.ndim == 2 else 0
        if validate:
            if m.shape != (w.size, dim) or P.shape != (w.size, dim, dim):
                raise ValueError(
                    f"inconsistent shapes w{w.shape} m{m.shape} P{P.shape}")
            if dim < 1:
                raise ValueError("mixture dimension must be positive")
            if not (np.all(np.isfinite(w)) and np.all(w >= 0)):
                raise ValueError("weights must be finite and nonnegative")
            if not np.all(np.isfinite(m)):
                raise ValueError("means must be finite")
            _check_spd(P)
        position_dim = dim if position_dim is None else int(position_dim)
        if not 1 <= position_dim <= dim:
            raise ValueError(f"position_dim {position_dim} out of range for dim {dim}")
        if validate and normalized and w.size and abs(w.sum() - 1.0) > 1e-9:
            raise ValueError(f"normalized mixture has total weight {w.sum()!r}")
        self.w = w
        self.m = m
        self.P = P
        self.position_dim = position_dim
        self.normalized = bool(normalized)

    # construction helpers
    @classmethod
    def empty(cls, dim, position_dim=None):
        return cls(np.zeros(0), np.zeros((0, dim)), np.zeros((0, dim, dim)),
                   position_dim=position_dim, validate=False)

    @classmethod
    def from_components(cls, components: Sequence[GaussianComponent], position_dim=None,
                        normalized=False, dim=None):
        components = list(components)
        if not components:
            if dim is None:
                raise ValueError("dim is required for an empty component list")
            return cls.empty(dim, position_dim)
        return cls([c.weight for c in components], np.stack([c.mean for c in components]),
                   np.stack([c.cov for c in components]), position_dim=position_dim,
                   normalized=normalized)

    @classmethod
    def single(cls, mean, cov, weight=1.0, position_dim=None):
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        return cls([weight], mean[None], np.atleast_2d(cov)[None], position_dim=position_dim,
                   normalized=weight == 1.0)

    def _replace(self, w=None, m=None, P=None, normalized=None):
        return GaussianMixture(
            self.w if w is None else w, self.m if m is None else m,
            self.P if P is None else P, position_dim=self.position_dim,
            normalized=self.normalized if normalized is None else normalized,
            validate=False)

    @staticmethod
    def concat(mixtures: Iterable["GaussianMixture"], normalized=False):
        mixtures = list(mixtures)
        if not mixtures:
            raise ValueError("nothing to concatenate")
        first = mixtures[0]
        if any(g.dim != first.dim for g in mixtures):
            raise ValueError("mixtures differ in dimension")
        return GaussianMixture(np.concatenate([g.w for g in mixtures]),
                               np.concatenate([g.m for g in mixtures]),
                               np.concatenate([g.P for g in mixtures]),
                               position_dim=first.position_dim, normalized=normalized,
                               validate=False)

    # container protocol
    @property
    def dim(self) -> int:
        return self.m.shape[1]

    @property
    def total_weight(self) -> float:
        return float(self.w.sum())

    @property
    def components(self) -> list[GaussianComponent]:
        return list(self)

    def __len__(self):
        return self.w.size

    def __iter__(self) -> Iterator[GaussianComponent]:
        for i in range(len(self)):
            yield GaussianComponent(self.w[i], self.m[i], self.P[i])

    def __getitem__(self, idx):
        if isinstance(idx, (int, np.integer)):
            return GaussianComponent(self.w[idx], self.m[idx], self.P[idx])
        return self._replace(self.w[idx], self.m[idx], self.P[idx], normalized=False)

    def __repr__(self):
        return (f"GaussianMixture(L={len(self)}, dim={self.dim}, "
                f"position_dim={self.position_dim}, total_weight={self.total_weight:.6g})")

    def normalize(self):
        total = self.w.sum()
        if total <= 0:
            raise ValueError("cannot normalize a mixture with zero total weight")
        return self._replace(w=self.w / total, normalized=True)

    def scaled(self, factor):
        return self._replace(w=self.w * factor, normalized=False)

    @property
    def position_means(self):
        return self.m[:, :self.position_dim]

    @property
    def position_covs(self):
        n_s = self.position_dim
        return self.P[:, :n_s, :n_s]

    # serialization
    def to_dict(self):
        return {
            "dim": self.dim,
            "position_dim": self.position_dim,
            "components": [
                {"w": float(w), "m": m.tolist(), "P": P.reshape(-1).tolist()}
                for w, m, P in zip(self.w, self.m, self.P)
            ],
        }

    @classmethod
    def from_dict(cls, data, normalized=None):
        dim = int(data["dim"])
        comps = data.get("components", [])
        w = np.array([c["w"] for c in comps], dtype=float)
        m = np.array([c["m"] for c in comps], dtype=float).reshape(len(comps), dim)
        P = np.array([c["P"] for c in comps], dtype=float).reshape(len(comps), dim, dim)
        if normalized is None:
            normalized = bool(len(comps)) and abs(w.sum() - 1.0) <= 1e-9
        if not comps:
            return cls.empty(dim, data.get("position_dim"))
        return cls(w, m, P, position_dim=data.get("position_dim"), normalized=normalized)

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True, eq=False)
class EigenBasis:
    """Orthonormal eigenvectors (columns) with eigenvalues in descending order."""

    vectors: np.ndarray
    values: np.ndarray = field(default=None)

    def reconstruct(self):
        return (self.vectors * self.values) @ self.vectors.T


def eigh_desc(P):
    """Batched symmetric eigendecomposition with descending eigenvalues.

    The sign of each eigenvector is fixed so that its largest-magnitude entry
    is positive (earliest index wins among equal magnitudes), which makes the
    split directions reproducible.
    """
    vals, vecs = np.linalg.eigh(_symmetrize(np.asarray(P, dtype=float)))
    # stable descending order keeps the solver's column order for repeated eigenvalues
    order = np.argsort(-vals, axis=-1, kind="stable")
    vals = np.take_along_axis(vals, order, axis=-1)
    vecs = np.take_along_axis(vecs, order[..., None, :], axis=-1)
    pivot = np.argmax(np.abs(vecs), axis=-2)
    sign = np.sign(np.take_along_axis(vecs, pivot[..., None, :], axis=-2))
    sign[sign == 0] = 1.0
    return vals, vecs * sign


def eig_decompose(cov) -> EigenBasis:
    """Eigendecomposition of a single SPD matrix.

    Raises
    ------
    ValueError
        If ``cov`` has non-finite entries, is not symmetric, or is not
        positive definite.
    """
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {cov.shape}")
    if not np.all(np.isfinite(cov)):
        raise ValueError("matrix has non-finite entries")
    scale = max(np.abs(cov).max(), 1e-300)
    if np.abs(cov - cov.T).max() > 1e-8 * scale:
        raise ValueError("matrix is not symmetric")
    vals, vecs = eigh_desc(cov)
    if vals[-1] <= 0:
        raise ValueError(f"matrix is not positive definite (min eigenvalue {vals[-1]:.3g})")
    return EigenBasis(vecs, vals)


def _log_gauss_pairs(m1, P1, m2, P2):
    """log N(m1_i; m2_j, P1_i + P2_j) for every pair, shape (L1, L2)."""
    S = P1[:, None] + P2[None, :]
    d = m1[:, None] - m2[None, :]
    L = np.linalg.cholesky(S)
    z = np.linalg.solve(L, d[..., None])[..., 0]
    logdet = 2.0 * np.log(np.diagonal(L, axis1=-2, axis2=-1)).sum(-1)
    n = m1.shape[1]
    return -0.5 * (np.einsum("...i,...i->...", z, z) + logdet + n * np.log(2 * np.pi))


def gaussian_overlap(f: GaussianMixture, g: GaussianMixture) -> float:
    """Inner product <f, g> = sum_ij f_i g_j N(m_i; m_j, P_i + P_j)."""
    if len(f) == 0 or len(g) == 0:
        return 0.0
    K = np.exp(_log_gauss_pairs(f.m, f.P, g.m, g.P))
    return float(f.w @ K @ g.w)


def l2_distance(f: GaussianMixture, g: GaussianMixture) -> float:
    """Closed-form integrated squared difference of two mixtures."""
    if f.dim != g.dim:
        raise ValueError(f"dimension mismatch: {f.dim} vs {g.dim}")
    # cross terms summed in both orders so the result is exactly symmetric
    cross = gaussian_overlap(f, g) + gaussian_overlap(g, f)
    val = (gaussian_overlap(f, f) + gaussian_overlap(g, g)) - cross
    return max(val, 0.0)


def merge_moments(w, m, P):
    """Moment-preserving merge of a set of components into one."""
    w = np.asarray(w, dtype=float)
    wt = w.sum()
    mu = (w @ m) / wt
    d = m - mu
    cov = (np.tensordot(w, P, axes=1) + (w[:, None] * d).T @ d) / wt
    return wt, mu, _symmetrize(cov)


def runnalls_cost(w1, m1, P1, w2, m2, P2):
    """Runnalls' upper bound on the KL discrimination induced by merging.

    Vectorized over leading axes of the arguments.
    """
    wt = w1 + w2
    a = w1 / wt
    b = w2 / wt
    d = m1 - m2
    P12 = a[..., None, None] * P1 + b[..., None, None] * P2 \
        + (a * b)[..., None, None] * d[..., :, None] * d[..., None, :]
    ld12 = np.linalg.slogdet(P12)[1]
    ld1 = np.linalg.slogdet(P1)[1]
    ld2 = np.linalg.slogdet(P2)[1]
    return 0.5 * (wt * ld12 - w1 * ld1 - w2 * ld2)


def reduce(gm: GaussianMixture, max_components: int, prune_below=PRUNE_WEIGHT,
           return_assignments=False):
    """Greedy pairwise merging that minimizes Runnalls' KL bound.

    Components whose weight is below ``prune_below`` (relative to the total)
    are dropped first and the remaining weights rescaled to the original
    total. Merging then proceeds until at most ``max_components`` remain.

    Parameters
    ----------
    gm : GaussianMixture
    max_components : int
        Target size, at least 1.
    prune_below : float, optional
        Relative pruning threshold, applied only when reduction is needed.
    return_assignments : bool, optional
        Also return, for each output component, the indices of the input
        components merged into it (pruned inputs appear in no group).

    Returns
    -------
    GaussianMixture or (GaussianMixture, list of ndarray)
    """
    if max_components < 1:
        raise ValueError("max_components must be >= 1")
    if len(gm) == 0:
        raise ValueError("cannot reduce an empty mixture")
    L = len(gm)
    if L <= max_components:
        out = gm
        groups = [np.array([i]) for i in range(L)]
        return (out, groups) if return_assignments else out

    total = gm.w.sum()
    keep = np.flatnonzero(gm.w >= prune_below * total)
    if keep.size == 0:
        keep = np.array([int(np.argmax(gm.w))])
    w = gm.w[keep].copy()
    if keep.size < L:
        w *= total / w.sum()
    m = gm.m[keep].copy()
    P = gm.P[keep].copy()
    groups = [[int(i)] for i in keep]
    n = w.size

    active = np.ones(n, dtype=bool)
    C = np.full((n, n), np.inf)
    for start in range(0, n, 256):
        rows = np.arange(start, min(start + 256, n))
        cols = np.arange(n)
        c = runnalls_cost(w[rows, None], m[rows, None], P[rows, None],
                          w[None, :], m[None, :], P[None, :])
        c[rows[:, None] >= cols[None, :]] = np.inf
        C[rows] = c
    C = np.minimum(C, C.T)
    row_arg = np.argmin(C, axis=1)
    row_min = C[np.arange(n), row_arg]

    count = n
    while count > max_components:
        i = int(np.argmin(row_min))
        j = int(row_arg[i])
        if j < i:
            i, j = j, i
        wi, mi, Pi = merge_moments(w[[i, j]], m[[i, j]], P[[i, j]])
        w[i], m[i], P[i] = wi, mi, Pi
        active[j] = False
        groups[i].extend(groups[j])
        groups[j] = []
        C[j, :] = np.inf
        C[:, j] = np.inf
        row_min[j] = np.inf
        others = np.flatnonzero(active)
        others = others[others != i]
        new = np.full(n, np.inf)
        if others.size:
            new[others] = runnalls_cost(w[i], m[i], P[i], w[others], m[others], P[others])
        C[i, :] = new
        C[:, i] = new
        count -= 1
        # refresh cached row minima touched by the merge
        stale = np.flatnonzero(active & ((row_arg == i) | (row_arg == j)))
        improved = np.flatnonzero(active & (new < row_min))
        for r in stale:
            row_arg[r] = np.argmin(C[r])
            row_min[r] = C[r, row_arg[r]]
        for r in improved:
            if r not in stale:
                row_arg[r] = i
                row_min[r] = new[r]
        row_arg[i] = np.argmin(C[i])
        row_min[i] = C[i, row_arg[i]]

    idx = np.flatnonzero(active)
    out = GaussianMixture(w[idx], m[idx], P[idx], position_dim=gm.position_dim,
                          normalized=gm.normalized, validate=False)
    if return_assignments:
        return out, [np.array(groups[i]) for i in idx]
    return out


def mixture_moments(gm: GaussianMixture):
    """Mean and covariance of the normalized mixture.

    Raises
    ------
    ValueError
        If the total weight is zero.
    """
    if len(gm) == 0 or gm.w.sum() <= 0:
        raise ValueError("mixture has zero total weight")
    _, mu, cov = merge_moments(gm.w, gm.m, gm.P)
    return mu, cov


def position_marginal(c, n_s: int):
    """Leading ``n_s``-dimensional marginal of a component or mixture."""
    if isinstance(c, GaussianMixture):
        if not 1 <= n_s <= c.dim:
            raise ValueError(f"n_s={n_s} out of range for dim {c.dim}")
        return GaussianMixture(c.w, c.m[:, :n_s], c.P[:, :n_s, :n_s], position_dim=n_s,
                               normalized=c.normalized, validate=False)
    if not 1 <= n_s <= c.dim:
        raise ValueError(f"n_s={n_s} out of range for dim {c.dim}")
    return GaussianComponent(c.weight, c.mean[:n_s], c.cov[:n_s, :n_s])


def sample(gm: GaussianMixture, size: int, rng=None):
    """Draw ``size`` samples from the normalized mixture."""
    rng = np.random.default_rng(rng)
    p = gm.w / gm.w.sum()
    counts = rng.multinomial(size, p)
    L = np.linalg.cholesky(gm.P)
    out = np.empty((size, gm.dim))
    pos = 0
    for i in np.flatnonzero(counts):
        k = counts[i]
        out[pos:pos + k] = gm.m[i] + rng.standard_normal((k, gm.dim)) @ L[i].T
        pos += k
    return out[rng.permutation(size)]


def pdf(gm: GaussianMixture, x):
    """Evaluate the (unnormalized) mixture density at points ``x`` of shape (N, n)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if len(gm) == 0:
        return np.zeros(x.shape[0])
    L = np.linalg.cholesky(gm.P)
    Linv = np.linalg.inv(L)
    logdet = 2.0 * np.log(np.diagonal(L, axis1=-2, axis2=-1)).sum(-1)
    out = np.zeros(x.shape[0])
    for i in np.flatnonzero(gm.w > 0):
        z = (x - gm.m[i]) @ Linv[i].T
        c = np.log(gm.w[i]) - 0.5 * (logdet[i] + gm.dim * np.log(2 * np.pi))
        out += np.exp(c - 0.5 * np.einsum("ij,ij->i", z, z))
    return out
