"""Distributions of the number of objects inside a region.

Each random finite set model reduces to per-object inclusion probabilities
``<1_S, p>``. These come from splitting and partitioning the mixture, from
Monte Carlo sampling, or from closed forms for boxes and half-spaces. Given
them, the pmfs follow from Poisson thinning, binomial thinning or the
Poisson-binomial distribution.
"""
from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.special import gammaln, ndtr, owens_t
from scipy.stats import binom, multivariate_normal, poisson

from .gaussmix import GaussianMixture, sample
from .regions import Box, Complement, HalfSpace, Region, Union
from .splitter import SplitConfig, partition, split_for_fov

__all__ = [
    "CardinalityPmf",
    "PoissonIntensity",
    "MbComponents",
    "GlmbHypothesis",
    "GlmbParams",
    "inclusion_probability",
    "box_probability",
    "conditional_fov_pmf",
    "poisson_fov_pmf",
    "iidc_fov_pmf",
    "mb_fov_pmf_direct",
    "mb_fov_pmf_dft",
    "poisson_binomial_pmf",
    "glmb_fov_pmf",
    "R_MAX",
]

R_MAX = 1.0 - 1e-12
MAX_DIRECT_MB = 12
MAX_EXHAUSTIVE = 20


@dataclass(frozen=True, eq=False)
class CardinalityPmf:
    """Probabilities of observing ``0, 1, ..., n_max`` objects."""

    probs: np.ndarray
    tol: float = field(default=1e-9, repr=False)

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float).reshape(-1)
        if p.size == 0:
            raise ValueError("empty pmf")
        if np.any(p < -1e-14) or not np.all(np.isfinite(p)):
            raise ValueError("pmf has negative or non-finite entries")
        p = np.maximum(p, 0.0)
        if abs(p.sum() - 1.0) > self.tol:
            raise ValueError(f"pmf sums to {p.sum()!r}")
        object.__setattr__(self, "probs", p)

    def __len__(self):
        return self.probs.size

    def __getitem__(self, n):
        return self.probs[n] if 0 <= n < self.probs.size else 0.0

    @property
    def mean(self) -> float:
        return float(np.arange(self.probs.size) @ self.probs)

    @property
    def variance(self) -> float:
        n = np.arange(self.probs.size)
        mu = n @ self.probs
        return float(((n - mu) ** 2) @ self.probs)

    def to_dict(self):
        return {"probs": self.probs.tolist(), "mean": self.mean, "variance": self.variance}


@dataclass(frozen=True, eq=False)
class PoissonIntensity:
    """Poisson random set with intensity ``phd``; ``n_global`` is its total mass."""

    phd: GaussianMixture
    n_global: float | None = None

    def __post_init__(self):
        total = self.phd.total_weight
        n = total if self.n_global is None else float(self.n_global)
        if abs(n - total) > 1e-9 * max(1.0, total):
            raise ValueError(f"n_global={n} differs from intensity mass {total}")
        object.__setattr__(self, "n_global", n)


@dataclass(frozen=True, eq=False)
class MbComponents:
    """Multi-Bernoulli random set: existence probabilities and spatial mixtures."""

    r: np.ndarray
    spatial: tuple

    def __init__(self, r: Sequence[float], spatial: Sequence[GaussianMixture]):
        r = np.asarray(r, dtype=float).reshape(-1)
        spatial = tuple(spatial)
        if r.size != len(spatial):
            raise ValueError("need one spatial density per existence probability")
        if np.any(r < 0) or np.any(r >= 1):
            raise ValueError("existence probabilities must lie in [0, 1); "
                             "use MbComponents.clamped for r = 1")
        for p in spatial:
            if abs(p.total_weight - 1.0) > 1e-9:
                raise ValueError("spatial densities must be normalized")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "spatial", spatial)

    @classmethod
    def clamped(cls, r, spatial):
        """Construct after clamping ``r`` to ``1 - 1e-12``, warning if anything changed."""
        r = np.asarray(r, dtype=float)
        if np.any(r > R_MAX):
            warnings.warn("existence probabilities of 1 clamped to 1 - 1e-12", RuntimeWarning,
                          stacklevel=2)
        return cls(np.minimum(r, R_MAX), spatial)

    def __len__(self):
        return self.r.size


@dataclass(frozen=True, eq=False)
class GlmbHypothesis:
    weight: float
    labels: tuple
    densities: Mapping

    def __post_init__(self):
        labels = tuple(self.labels)
        if len(set(labels)) != len(labels):
            raise ValueError("labels within a hypothesis must be distinct")
        if self.weight < 0:
            raise ValueError("hypothesis weight must be >= 0")
        missing = [l for l in labels if l not in self.densities]
        if missing:
            raise ValueError(f"no density for labels {missing}")
        object.__setattr__(self, "labels", labels)


@dataclass(frozen=True, eq=False)
class GlmbParams:
    hypotheses: tuple

    def __init__(self, hypotheses: Sequence[GlmbHypothesis]):
        hyp = tuple(hypotheses)
        total = sum(h.weight for h in hyp)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"hypothesis weights sum to {total!r}")
        object.__setattr__(self, "hypotheses", hyp)


# inclusion probabilities ----------------------------------------------------

def _bvn_cdf(h, k, rho):
    """Standard bivariate normal CDF P(X <= h, Y <= k) via Owen's T function."""
    h, k, rho = np.broadcast_arrays(np.asarray(h, float), np.asarray(k, float),
                                    np.asarray(rho, float))
    h = np.clip(h, -40.0, 40.0)
    k = np.clip(k, -40.0, 40.0)
    # the formula is singular at zero; the CDF is continuous there
    h = np.where(h == 0.0, 1e-300, h)
    k = np.where(k == 0.0, 1e-300, k)
    s = np.sqrt(np.maximum(1.0 - rho * rho, 1e-300))
    with np.errstate(over="ignore"):
        ah = (k - rho * h) / (h * s)
        ak = (h - rho * k) / (k * s)
    # sign test rather than h * k, which underflows for the nudged zeros
    beta = np.where(np.sign(h) == np.sign(k), 0.0, 0.5)
    out = 0.5 * (ndtr(h) + ndtr(k)) - owens_t(h, ah) - owens_t(k, ak) - beta
    return np.clip(out, 0.0, 1.0)


def box_probability(m, P, lo, hi):
    """Gaussian probability of an axis-aligned box, vectorized over components.

    Parameters
    ----------
    m : array, shape (L, d)
    P : array, shape (L, d, d)
    lo, hi : array, shape (d,) or (K, d)
        Box bounds; a leading ``K`` axis evaluates several boxes at once.

    Returns
    -------
    array, shape (L,) or (K, L)
    """
    m = np.atleast_2d(m)
    P = np.asarray(P).reshape(m.shape[0], m.shape[1], m.shape[1])
    lo = np.asarray(lo, float)
    hi = np.asarray(hi, float)
    single = lo.ndim == 1
    lo = np.atleast_2d(lo)[:, None, :]
    hi = np.atleast_2d(hi)[:, None, :]
    d = m.shape[1]
    sd = np.sqrt(np.diagonal(P, axis1=1, axis2=2))
    a = (lo - m) / sd
    b = (hi - m) / sd
    if d == 1:
        out = ndtr(b[..., 0]) - ndtr(a[..., 0])
    elif d == 2:
        rho = P[:, 0, 1] / (sd[:, 0] * sd[:, 1])
        out = (_bvn_cdf(b[..., 0], b[..., 1], rho) - _bvn_cdf(a[..., 0], b[..., 1], rho)
               - _bvn_cdf(b[..., 0], a[..., 1], rho) + _bvn_cdf(a[..., 0], a[..., 1], rho))
    else:
        out = np.empty(a.shape[:2])
        corners = list(itertools.product((0, 1), repeat=d))
        for kk in range(a.shape[0]):
            for i in range(m.shape[0]):
                dist = multivariate_normal(m[i], P[i])
                tot = 0.0
                for c in corners:
                    x = np.where(np.array(c) == 1, hi[kk, 0], lo[kk, 0])
                    tot += (-1) ** (d - sum(c)) * dist.cdf(x)
                out[kk, i] = tot
    out = np.clip(out, 0.0, 1.0)
    return out[0] if single else out


def _is_whole(S):
    return isinstance(S, Complement) and isinstance(S.region, Union) and not S.region.regions


def _is_empty(S):
    return isinstance(S, Union) and not S.regions


def _exact_component_probs(p: GaussianMixture, S: Region):
    n_s = p.position_dim
    ms, Ps = p.position_means, p.position_covs
    if _is_whole(S):
        return np.ones(len(p))
    if _is_empty(S):
        return np.zeros(len(p))
    if isinstance(S, Box):
        return box_probability(ms, Ps, S.lo, S.hi)
    if isinstance(S, HalfSpace):
        n = S.normal
        z = (ms @ n - S.offset) / np.sqrt(np.einsum("i,lij,j->l", n, Ps, n))
        return ndtr(z)
    if isinstance(S, Complement):
        return 1.0 - _exact_component_probs(p, S.region)
    raise ValueError(f"no closed-form inclusion probability for {type(S).__name__} "
                     f"in dimension {n_s}")


def inclusion_probability(p: GaussianMixture, S: Region, config: SplitConfig | None = None,
                          method: str = "split", n_samples: int = 100_000, rng=None,
                          return_stderr: bool = False):
    """Probability mass of ``p`` inside ``S``.

    Parameters
    ----------
    p : GaussianMixture
        Density (normalized or not; the result is relative to its total mass).
    S : Region
    config : SplitConfig, optional
        Used by the ``"split"`` method.
    method : {"split", "montecarlo", "exact"}
        ``split`` sums the weights of the inside part of the refined mixture.
        ``montecarlo`` samples the mixture. ``exact`` uses closed forms and
        supports boxes, half-spaces, their complements and the trivial regions.
    return_stderr : bool
        Also return the standard error (zero for deterministic methods).
    """
    total = p.total_weight
    if len(p) == 0 or total <= 0:
        raise ValueError("density has zero mass")
    if method == "split":
        refined = split_for_fov(p, config or SplitConfig(), S)
        inside, outside = partition(refined, S)
        a, b = inside.total_weight, outside.total_weight
        q, se = a / (a + b) if a + b > 0 else 0.0, 0.0
    elif method in ("montecarlo", "mc"):
        x = sample(p, int(n_samples), rng)
        hits = S.contains(x[:, :p.position_dim])
        q = float(hits.mean())
        se = float(np.sqrt(q * (1 - q) / n_samples))
    elif method == "exact":
        q = float(p.w @ _exact_component_probs(p, S) / total)
        se = 0.0
    else:
        raise ValueError(f"unknown inclusion method {method!r}")
    q = float(min(max(q, 0.0), 1.0))
    return (q, se) if return_stderr else q


def _qs(densities, S, config, method, **kw):
    return np.array([inclusion_probability(p, S, config, method, **kw) for p in densities])


# pmfs -------------------------------------------------------------------------

def poisson_binomial_pmf(q) -> np.ndarray:
    """Pmf of a sum of independent Bernoulli(q_i) variables via the DFT.

    The characteristic function is evaluated on the ``M + 1`` roots of unity
    and inverted with an FFT; the imaginary residue is discarded. A 2-D
    ``q`` of shape ``(K, M)`` gives ``K`` pmfs at once.
    """
    q = np.asarray(q, dtype=float)
    batched = q.ndim == 2
    q = np.atleast_2d(q)
    M = q.shape[1]
    if M == 0:
        out = np.ones((q.shape[0], 1))
        return out if batched else out[0]
    z = np.exp(2j * np.pi * np.arange(M + 1) / (M + 1))
    # product over components in log-polar form to avoid underflow for large M
    terms = q[:, None, :] * z[None, :, None] + (1.0 - q[:, None, :])
    mag = np.abs(terms)
    zero = mag == 0
    logmag = np.log(np.where(zero, 1.0, mag)).sum(axis=-1)
    phase = np.angle(terms).sum(axis=-1)
    phi = np.where(zero.any(axis=-1), 0.0, np.exp(logmag + 1j * phase))
    out = np.fft.fft(phi, axis=-1).real / (M + 1)
    out[np.abs(out) < 1e-15] = 0.0
    out = np.maximum(out, 0.0)
    return out if batched else out[0]


def _pmf(probs, tol=1e-9):
    probs = np.asarray(probs, dtype=float)
    s = probs.sum()
    if s > 0 and abs(s - 1.0) <= tol:
        probs = probs / s
    return CardinalityPmf(probs, tol=tol)


def _subset_products(q):
    """Probability of every subset of independent events (bit i = event i occurs)."""
    prob = np.ones(1)
    for qi in q:
        prob = np.concatenate([prob * (1.0 - qi), prob * qi])
    return prob


def _popcount(n):
    idx = np.arange(1 << n, dtype=np.int64)
    count = np.zeros(idx.size, dtype=int)
    for i in range(n):
        count += (idx >> i) & 1
    return count


def conditional_fov_pmf(points, S: Region, detect=None) -> CardinalityPmf:
    """Count pmf for a known set of object states.

    Without ``detect`` the count of points in ``S`` is deterministic. With
    per-point detection probabilities the count of detected points in ``S``
    is computed by enumerating all subsets (at most 20 points).
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.size == 0:
        return CardinalityPmf(np.ones(1))
    inside = S.contains(pts[:, :S.dim]).astype(float)
    N = pts.shape[0]
    if detect is None:
        probs = np.zeros(N + 1)
        probs[int(inside.sum())] = 1.0
        return CardinalityPmf(probs)
    if N > MAX_EXHAUSTIVE:
        raise ValueError(f"exhaustive enumeration supports at most {MAX_EXHAUSTIVE} points")
    q = np.broadcast_to(np.asarray(detect, dtype=float), (N,)) * inside
    prob = _subset_products(q)
    probs = np.bincount(_popcount(N), weights=prob, minlength=N + 1)
    return _pmf(probs)


def poisson_fov_pmf(intensity: PoissonIntensity, S: Region, eps_tail: float = 1e-12,
                    config: SplitConfig | None = None, method: str = "split") -> CardinalityPmf:
    """Count pmf inside ``S`` for a Poisson random set.

    The infinite sum over the global count ``m`` is truncated at the smallest
    ``m_max`` whose Poisson(N) upper tail is below ``eps_tail``.
    """
    if not eps_tail > 0:
        raise ValueError("eps_tail must be positive")
    N = intensity.n_global
    if N <= 0 or len(intensity.phd) == 0:
        return CardinalityPmf(np.ones(1))
    a = N * inclusion_probability(intensity.phd, S, config, method)
    b = max(N - a, 0.0)
    m_max = int(poisson.isf(eps_tail, N))
    while poisson.sf(m_max, N) >= eps_tail:
        m_max += 1
    n = np.arange(m_max + 1)[:, None]
    m = np.arange(m_max + 1)[None, :]
    valid = m >= n
    k = np.where(valid, m - n, 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        la = np.where(n > 0, n * np.log(a) if a > 0 else -np.inf, 0.0)
        lb = np.where(k > 0, k * np.log(b) if b > 0 else -np.inf, 0.0)
        log_terms = -N - gammaln(n + 1) - gammaln(k + 1) + la + lb
    terms = np.where(valid, np.exp(log_terms), 0.0)
    probs = terms.sum(axis=1)
    return _pmf(probs, tol=max(1e-9, 10 * eps_tail))


def iidc_fov_pmf(rho_global: CardinalityPmf, p: GaussianMixture, S: Region,
                 config: SplitConfig | None = None, method: str = "split") -> CardinalityPmf:
    """Count pmf inside ``S`` for an i.i.d. cluster process (binomial thinning)."""
    q = inclusion_probability(p, S, config, method)
    rho = rho_global.probs
    M = rho.size - 1
    n = np.arange(M + 1)[:, None]
    m = np.arange(M + 1)[None, :]
    probs = (binom.pmf(n, m, q) * rho[None, :]).sum(axis=1)
    return _pmf(probs, tol=max(1e-9, rho_global.tol))


def mb_fov_pmf_direct(mb: MbComponents, S: Region, config: SplitConfig | None = None,
                      method: str = "split", q=None) -> CardinalityPmf:
    """Count pmf for a multi-Bernoulli set by enumerating all 3-way index partitions.

    Every component is either inside, outside, or absent. The cost grows as
    ``3**M`` and the function is meant as a reference for small ``M``.
    """
    M = len(mb)
    if M > MAX_DIRECT_MB:
        raise ValueError(f"direct enumeration supports at most {MAX_DIRECT_MB} components")
    if M == 0:
        return CardinalityPmf(np.ones(1))
    if q is None:
        q = _qs(mb.spatial, S, config, method)
    r = mb.r
    a = r * q / (1.0 - r)
    b = r * (1.0 - q) / (1.0 - r)
    # base-3 digits of every partition: 0 -> inside, 1 -> outside, 2 -> absent
    codes = np.arange(3 ** M)
    digits = (codes[:, None] // 3 ** np.arange(M)[None, :]) % 3
    factors = np.where(digits == 0, a[None, :], np.where(digits == 1, b[None, :], 1.0))
    prods = factors.prod(axis=1)
    n_in = (digits == 0).sum(axis=1)
    probs = np.prod(1.0 - r) * np.bincount(n_in, weights=prods, minlength=M + 1)
    return _pmf(probs)


def mb_fov_pmf_dft(mb: MbComponents, S: Region, config: SplitConfig | None = None,
                   method: str = "split", q=None) -> CardinalityPmf:
    """Count pmf for a multi-Bernoulli set via the DFT of its characteristic function."""
    if len(mb) == 0:
        return CardinalityPmf(np.ones(1))
    if q is None:
        q = _qs(mb.spatial, S, config, method)
    return _pmf(poisson_binomial_pmf(mb.r * q))


def glmb_fov_pmf(glmb: GlmbParams, S: Region, config: SplitConfig | None = None,
                 method: str = "split") -> CardinalityPmf:
    """Count pmf for a GLMB density: hypothesis-weighted Poisson-binomials.

    Inclusion probabilities are computed once per distinct density object.
    """
    cache = {}
    n_max = max((len(h.labels) for h in glmb.hypotheses), default=0)
    probs = np.zeros(n_max + 1)
    for h in glmb.hypotheses:
        if h.weight == 0:
            continue
        q = []
        for l in h.labels:
            dens = h.densities[l]
            key = id(dens)
            if key not in cache:
                cache[key] = inclusion_probability(dens, S, config, method)
            q.append(cache[key])
        pb = poisson_binomial_pmf(np.array(q))
        probs[:pb.size] += h.weight * pb
    return _pmf(probs)
