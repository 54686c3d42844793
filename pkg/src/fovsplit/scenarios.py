"""Reference scenarios: anchor-based tracking in an airport and FoV placement.

The airport scenario tracks a single walker from natural-language style
reports of the form "near anchor a". The placement scenario scans a square
field of view over a random multi-Bernoulli workspace and maps the variance
of the number of objects inside it. Both layouts are illustrative and fully
determined by their seeds.
"""
from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .bernoulli import (BernoulliState, DetectionModel, MeasurementSet, MotionModel, predict,
                        update)
from .cardinality import MbComponents, box_probability, poisson_binomial_pmf
from .gaussmix import GaussianMixture, mixture_moments, pdf, position_marginal, sample
from .regions import Box, Complement, Disc, GridSpec, Region, Union, region_from_dict
from .splitter import SplitConfig

__all__ = [
    "AnchorMap",
    "AirportConfig",
    "PlacementConfig",
    "StepRecord",
    "TrackLog",
    "PlacementResult",
    "cv_model",
    "simulate_truth_and_measurements",
    "run_airport",
    "make_placement_mb",
    "run_sensor_placement",
    "export",
    "load_json",
    "default_anchor_map",
    "hdr_contains",
]

log = logging.getLogger(__name__)


def cv_model(dt: float, process_intensity: float):
    """Nearly constant velocity model in the plane, state ``[x, y, vx, vy]``.

    Returns
    -------
    F, Q : ndarray, shape (4, 4)
        ``Q`` carries a ``1e-12`` diagonal so that it is strictly positive
        definite even for ``dt -> 0``.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    F = np.eye(4)
    F[0, 2] = F[1, 3] = dt
    q = process_intensity
    a, b, c = q * dt ** 3 / 3, q * dt ** 2 / 2, q * dt
    Q = np.array([[a, 0, b, 0],
                  [0, a, 0, b],
                  [b, 0, c, 0],
                  [0, b, 0, c]], dtype=float)
    return F, Q + 1e-12 * np.eye(4)


# anchors --------------------------------------------------------------------

class AnchorMap:
    """Named anchor positions with their association discs.

    Each anchor ``a`` covers the disc of radius ``2 d_a / 3`` around it, where
    ``d_a`` is the distance to its nearest neighbouring anchor.
    """

    def __init__(self, ids: Sequence[int], positions):
        ids = [int(i) for i in ids]
        pos = np.asarray(positions, dtype=float).reshape(len(ids), -1)
        if len(set(ids)) != len(ids):
            raise ValueError("anchor ids must be unique")
        if len(ids) < 2:
            raise ValueError("at least two anchors are needed")
        self.ids = tuple(ids)
        self.positions = pos
        diff = pos[:, None, :] - pos[None, :, :]
        dist = np.sqrt((diff ** 2).sum(-1))
        np.fill_diagonal(dist, np.inf)
        self.nearest = dist.min(axis=1)
        if np.any(self.nearest <= 0):
            raise ValueError("anchors must have distinct positions")
        self._index = {a: i for i, a in enumerate(ids)}
        self._regions = {a: Disc(pos[i], 2.0 * self.nearest[i] / 3.0) for a, i in self._index.items()}

    def __len__(self):
        return len(self.ids)

    def radius(self, a: int) -> float:
        return self._regions[a].radius

    def region(self, a: int) -> Disc:
        return self._regions[int(a)]

    def position(self, a: int):
        return self.positions[self._index[int(a)]]

    def coverage(self) -> Region:
        """Union of all anchor discs."""
        return Union([self._regions[a] for a in self.ids])

    def containing(self, s) -> list[int]:
        return [a for a in self.ids if self._regions[a].contains(s)]

    def to_dict(self):
        return {"anchors": [{"id": a, "position": self.position(a).tolist()} for a in self.ids]}

    @classmethod
    def from_dict(cls, d):
        items = d["anchors"]
        return cls([it["id"] for it in items], [it["position"] for it in items])


def default_anchor_map() -> AnchorMap:
    """Twelve anchors along a two-sided concourse (illustrative layout)."""
    pos = [(25.0 + 50.0 * i, 35.0) for i in range(6)] + [(50.0 + 50.0 * i, 85.0) for i in range(6)]
    return AnchorMap(range(1, 13), pos)


def _default_exclusions():
    return [Box([90.0, 105.0], [120.0, 120.0]), Box([190.0, 0.0], [220.0, 15.0]),
            Box([240.0, 105.0], [270.0, 120.0])]


def _default_birth():
    means, covs = [], []
    for x in (50.0, 150.0, 250.0):
        for y in (30.0, 90.0):
            means.append([x, y, 0.0, 0.0])
            covs.append(np.diag([40.0 ** 2, 25.0 ** 2, 0.5 ** 2, 0.5 ** 2]))
    return GaussianMixture(np.full(6, 1 / 6), np.array(means), np.array(covs), position_dim=2,
                           normalized=True)


@dataclass
class AirportConfig:
    """Parameters of the airport tracking scenario.

    ``process_intensity`` drives the filter model; the simulated walker uses
    the smaller ``truth_process_intensity`` so that it moves purposefully.
    ``forced_misdetections`` lists steps at which a true report is withheld
    regardless of the detection draw.
    """

    anchors: AnchorMap = field(default_factory=default_anchor_map)
    exclusion: list = field(default_factory=_default_exclusions)
    roi: Box = field(default_factory=lambda: Box([0.0, 0.0], [300.0, 120.0]))
    dt: float = 15.0
    pd: float = 0.9
    clutter_rate: float = 0.25
    process_intensity: float = 0.04
    truth_process_intensity: float = 0.0004
    steps: int = 60
    p_s: float = 0.97
    p_b: float = 0.01
    birth: GaussianMixture = field(default_factory=_default_birth)
    initial_r: float = 0.9
    initial_mean: tuple = (15.0, 60.0, 0.25, 0.0)
    initial_cov: tuple = (15.0 ** 2, 15.0 ** 2, 0.3 ** 2, 0.3 ** 2)
    truth_initial: tuple = (15.0, 60.0, 0.3, 0.02)
    forced_misdetections: tuple = (30, 31, 32)
    max_components: int = 100
    prune_exclusion: bool = True
    split: SplitConfig = field(default_factory=SplitConfig)
    seed: int = 0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        for name in ("pd", "p_s", "p_b", "initial_r"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ValueError(f"{name}={v} outside [0, 1]")
        if self.clutter_rate < 0 or self.process_intensity < 0 or self.truth_process_intensity < 0:
            raise ValueError("rates must be >= 0")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")

    def motion(self) -> MotionModel:
        F, Q = cv_model(self.dt, self.process_intensity)
        return MotionModel(F, Q, self.p_s, self.p_b, self.birth)

    def detection(self) -> DetectionModel:
        return DetectionModel(self.anchors.coverage(), self.pd, self.clutter_rate,
                              1.0 / len(self.anchors))

    def exclusion_region(self) -> Region:
        return Union(list(self.exclusion) + [Complement(self.roi)])

    def initial_state(self) -> BernoulliState:
        gm = GaussianMixture.single(np.array(self.initial_mean), np.diag(self.initial_cov),
                                    position_dim=2)
        return BernoulliState(self.initial_r, gm)

    def to_dict(self):
        return {
            "anchors": self.anchors.to_dict()["anchors"],
            "exclusion": [r.to_dict() for r in self.exclusion],
            "roi": self.roi.to_dict(),
            "dt": self.dt, "pd": self.pd, "clutter_rate": self.clutter_rate,
            "process_intensity": self.process_intensity,
            "truth_process_intensity": self.truth_process_intensity,
            "steps": self.steps, "p_s": self.p_s, "p_b": self.p_b,
            "birth": self.birth.to_dict(),
            "initial_r": self.initial_r, "initial_mean": list(self.initial_mean),
            "initial_cov": list(self.initial_cov), "truth_initial": list(self.truth_initial),
            "forced_misdetections": list(self.forced_misdetections),
            "max_components": self.max_components, "prune_exclusion": self.prune_exclusion,
            "split": {"w_min": self.split.w_min, "R": self.split.R, "lambda": self.split.lam,
                      "zeta": self.split.grid.zeta, "n_g": self.split.grid.n_g,
                      "max_depth": self.split.max_depth},
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict):
        """Build a config from JSON data; missing keys take their defaults."""
        known = {"anchors", "exclusion", "roi", "dt", "pd", "clutter_rate", "process_intensity",
                 "truth_process_intensity", "steps", "p_s", "p_b", "birth", "initial_r",
                 "initial_mean", "initial_cov", "truth_initial", "forced_misdetections",
                 "max_components", "prune_exclusion", "split", "seed"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown airport config keys: {sorted(unknown)}")
        kw = {}
        if "anchors" in d:
            kw["anchors"] = AnchorMap.from_dict({"anchors": d["anchors"]})
        if "exclusion" in d:
            kw["exclusion"] = [region_from_dict(r) for r in d["exclusion"]]
        if "roi" in d:
            roi = region_from_dict(d["roi"])
            if not isinstance(roi, Box):
                raise ValueError("roi must be a box")
            kw["roi"] = roi
        if "birth" in d:
            kw["birth"] = GaussianMixture.from_dict(d["birth"], normalized=True)
        if "split" in d:
            s = d["split"]
            kw["split"] = SplitConfig(w_min=s.get("w_min", 0.01), R=s.get("R", 3),
                                      lam=s.get("lambda", 0.001),
                                      grid=GridSpec(s.get("zeta", 3.0), s.get("n_g", 7)),
                                      max_depth=s.get("max_depth", 10))
        for key in ("dt", "pd", "clutter_rate", "process_intensity", "truth_process_intensity",
                    "p_s", "p_b", "initial_r"):
            if key in d:
                kw[key] = float(d[key])
        for key in ("steps", "max_components", "seed"):
            if key in d:
                kw[key] = int(d[key])
        for key in ("initial_mean", "initial_cov", "truth_initial", "forced_misdetections"):
            if key in d:
                kw[key] = tuple(d[key])
        if "prune_exclusion" in d:
            kw["prune_exclusion"] = bool(d["prune_exclusion"])
        return cls(**kw)


# airport simulation -----------------------------------------------------------

def _blocked(s, cfg):
    if not cfg.roi.contains(s):
        return True
    return any(r.contains(s) for r in cfg.exclusion)


def _reflect_step(x_old, x_new, cfg):
    """Specular reflection of a proposed move that enters a blocked area."""
    if not _blocked(x_new[:2], cfg):
        return x_new
    d = x_new[:2] - x_old[:2]
    for flip in ((-1.0, 1.0), (1.0, -1.0), (-1.0, -1.0)):
        f = np.array(flip)
        cand = x_new.copy()
        cand[:2] = x_old[:2] + f * d
        cand[2:] = f * x_new[2:]
        if not _blocked(cand[:2], cfg):
            return cand
    stay = x_old.copy()
    stay[2:] = -x_new[2:]
    return stay


def simulate_truth_and_measurements(cfg: AirportConfig, rng=None):
    """Simulate the walker and the stream of anchor reports.

    Returns
    -------
    truth : ndarray, shape (K + 1, 4)
        States at steps ``0..K``.
    measurements : list of MeasurementSet
        Reports at steps ``1..K`` (index ``k - 1``).
    detected : ndarray of bool, shape (K,)
        Whether a true report was included at each step.
    """
    rng = np.random.default_rng(cfg.seed if rng is None else rng)
    F, Q = cv_model(cfg.dt, cfg.truth_process_intensity)
    Lq = np.linalg.cholesky(Q)
    x = np.array(cfg.truth_initial, dtype=float)
    if _blocked(x[:2], cfg):
        raise ValueError("initial truth lies outside the walkable area")
    truth = [x.copy()]
    meas, detected = [], []
    forced = set(int(k) for k in cfg.forced_misdetections)
    n_anchor = len(cfg.anchors)
    for k in range(1, cfg.steps + 1):
        prop = F @ x + Lq @ rng.standard_normal(4)
        x = _reflect_step(x, prop, cfg)
        if _blocked(x[:2], cfg):
            log.warning("truth left the walkable area at step %d; run truncated", k)
            break
        truth.append(x.copy())
        ids = []
        hit = cfg.anchors.containing(x[:2])
        det_draw = rng.random()
        if hit and det_draw < cfg.pd and k not in forced:
            dist = [np.linalg.norm(x[:2] - cfg.anchors.position(a)) for a in hit]
            ids.append(hit[int(np.argmin(dist))])
            detected.append(True)
        else:
            detected.append(False)
        n_false = rng.poisson(cfg.clutter_rate)
        ids.extend(int(cfg.anchors.ids[i]) for i in rng.integers(0, n_anchor, n_false))
        meas.append(MeasurementSet.of_anchors(ids))
    return np.array(truth), meas, np.array(detected, dtype=bool)


@dataclass
class StepRecord:
    k: int
    r: float
    estimate: np.ndarray
    pos_rss: float
    vel_rss: float
    measurements: tuple
    truth: np.ndarray
    detected: bool
    delta: float
    n_components: int


class TrackLog:
    """Per-step filter output of an airport run.

    ``snapshots`` holds the posterior mixture of each step when the run was
    asked to keep them.
    """

    columns = ("k", "r", "x", "y", "vx", "vy", "pos_rss", "vel_rss", "truth_x", "truth_y",
               "truth_vx", "truth_vy", "detected", "measurements", "delta", "n_components")

    def __init__(self, records=(), snapshots=None):
        self.records: list[StepRecord] = list(records)
        self.snapshots = snapshots

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def r(self):
        return np.array([rec.r for rec in self.records])

    def rows(self):
        for rec in self.records:
            yield (rec.k, rec.r, *rec.estimate.tolist(), rec.pos_rss, rec.vel_rss,
                   *rec.truth.tolist(), int(rec.detected),
                   ";".join(str(a) for a in rec.measurements), rec.delta, rec.n_components)

    def to_dict(self):
        return {"columns": list(self.columns), "rows": [list(r) for r in self.rows()]}

    @classmethod
    def from_dict(cls, d):
        recs = []
        for row in d["rows"]:
            k, r, x, y, vx, vy, prss, vrss, tx, ty, tvx, tvy, det, ms, delta, n = row
            recs.append(StepRecord(int(k), float(r), np.array([x, y, vx, vy], float), float(prss),
                                   float(vrss), tuple(int(a) for a in str(ms).split(";") if a),
                                   np.array([tx, ty, tvx, tvy], float), bool(det), float(delta),
                                   int(n)))
        return cls(recs)

    def jsonl_snapshots(self) -> str:
        """One JSON object per step: ``k``, ``r``, ``gm``, ``delta``, ``n_components``."""
        if self.snapshots is None:
            raise ValueError("run was not asked to keep snapshots")
        lines = []
        for rec, gm in zip(self.records, self.snapshots):
            lines.append(json.dumps({"k": rec.k, "r": rec.r, "gm": gm.to_dict(),
                                     "delta": _finite_or_none(rec.delta),
                                     "n_components": rec.n_components}))
        return "\n".join(lines) + ("\n" if lines else "")


def _finite_or_none(x):
    return float(x) if np.isfinite(x) else None


def run_airport(cfg: AirportConfig | None = None, keep_snapshots: bool = False,
                truth_and_measurements=None) -> TrackLog:
    """Run the Bernoulli filter over a simulated airport walk."""
    cfg = cfg or AirportConfig()
    if truth_and_measurements is None:
        truth_and_measurements = simulate_truth_and_measurements(cfg)
    truth, meas, detected = truth_and_measurements
    motion = cfg.motion()
    det = cfg.detection()
    excl = cfg.exclusion_region() if cfg.prune_exclusion else None
    state = cfg.initial_state()
    records, snaps = [], [] if keep_snapshots else None
    for k in range(1, len(meas) + 1):
        state = predict(state, motion)
        state = update(state, meas[k - 1], det, cfg.split, anchors=cfg.anchors,
                       max_components=cfg.max_components, exclusion=excl)
        mu, cov = mixture_moments(state.spatial)
        records.append(StepRecord(
            k, state.r, mu, float(np.sqrt(np.trace(cov[:2, :2]))),
            float(np.sqrt(np.trace(cov[2:, 2:]))),
            tuple(z.anchor for z in meas[k - 1]), truth[k], bool(detected[k - 1]),
            float(state.info.get("delta", np.nan)), len(state.spatial)))
        if keep_snapshots:
            snaps.append(state.spatial)
    return TrackLog(records, snaps)


def hdr_contains(gm: GaussianMixture, point, level: float = 0.99, n_samples: int = 4000,
                 rng=None) -> bool:
    """Whether ``point`` lies in the ``level`` highest-density region of the position marginal.

    The density threshold is the ``1 - level`` quantile of the density over
    Monte Carlo draws from the marginal.
    """
    marg = position_marginal(gm, gm.position_dim)
    x = sample(marg, n_samples, rng)
    thresh = np.quantile(pdf(marg, x), 1.0 - level)
    point = np.asarray(point, dtype=float)[: gm.position_dim]
    return bool(pdf(marg, point[None, :])[0] >= thresh)


# sensor placement ---------------------------------------------------------------

@dataclass
class PlacementConfig:
    """Random multi-Bernoulli workspace and candidate grid for FoV placement."""

    n_components: int = 100
    n_clusters: int = 8
    r_low: float = 0.35
    r_high: float = 1.0 - 1e-12
    roi: Box = field(default_factory=lambda: Box([-3.0, -3.0], [3.0, 3.0]))
    cluster_spread: float = 0.35
    sd_range: tuple = (0.05, 0.3)
    fov_size: tuple = (1.0, 1.0)
    spacing: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if np.any(np.asarray(self.fov_size, dtype=float) <= 0):
            raise ValueError("fov side lengths must be positive")
        if not self.spacing > 0:
            raise ValueError("spacing must be positive")
        if not 0 <= self.r_low <= self.r_high < 1:
            raise ValueError("need 0 <= r_low <= r_high < 1")
        if self.n_components < 1:
            raise ValueError("n_components must be >= 1")

    def centers(self):
        """Candidate FoV centers, x-major, shape (K, 2), and the axis ticks."""
        lo, hi = self.roi.lo, self.roi.hi
        n = np.floor((hi - lo) / self.spacing + 1e-9).astype(int) + 1
        xs = np.round(lo[0] + self.spacing * np.arange(n[0]), 12)
        ys = np.round(lo[1] + self.spacing * np.arange(n[1]), 12)
        if xs.size == 0 or ys.size == 0:
            raise ValueError("candidate grid is empty")
        c = np.stack(np.meshgrid(xs, ys, indexing="ij"), axis=-1).reshape(-1, 2)
        return c, xs, ys

    def to_dict(self):
        d = asdict(self)
        d["roi"] = self.roi.to_dict()
        d["sd_range"] = list(self.sd_range)
        d["fov_size"] = list(self.fov_size)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown placement config keys: {sorted(unknown)}")
        if "roi" in d:
            d["roi"] = region_from_dict(d["roi"])
        for key in ("sd_range", "fov_size"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


def make_placement_mb(cfg: PlacementConfig) -> MbComponents:
    """Clustered random workspace: Gaussian densities with random orientation."""
    rng = np.random.default_rng(cfg.seed)
    lo, hi = cfg.roi.lo, cfg.roi.hi
    inner = 0.1 * (hi - lo)
    centers = rng.uniform(lo + inner, hi - inner, size=(cfg.n_clusters, 2))
    owner = rng.integers(0, cfg.n_clusters, cfg.n_components)
    means = centers[owner] + cfg.cluster_spread * rng.standard_normal((cfg.n_components, 2))
    means = np.clip(means, lo, hi)
    sds = rng.uniform(cfg.sd_range[0], cfg.sd_range[1], size=(cfg.n_components, 2))
    theta = rng.uniform(0, np.pi, cfg.n_components)
    c, s = np.cos(theta), np.sin(theta)
    rot = np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], axis=-2)
    covs = rot @ (sds[:, :, None] ** 2 * np.eye(2)) @ np.swapaxes(rot, -1, -2)
    covs = 0.5 * (covs + np.swapaxes(covs, -1, -2))
    r = rng.uniform(cfg.r_low, cfg.r_high, cfg.n_components)
    spatial = [GaussianMixture(np.ones(1), means[i:i + 1], covs[i:i + 1], normalized=True)
               for i in range(cfg.n_components)]
    return MbComponents(r, spatial)


@dataclass
class PlacementResult:
    centers: np.ndarray
    variance: np.ndarray
    mean: np.ndarray
    xs: np.ndarray
    ys: np.ndarray
    best_center: np.ndarray
    best_variance: float

    def variance_grid(self):
        return self.variance.reshape(self.xs.size, self.ys.size)

    def rows(self):
        for (cx, cy), v in zip(self.centers, self.variance):
            yield (cx, cy, v)

    def to_dict(self):
        return {"columns": ["cx", "cy", "variance"], "rows": [list(r) for r in self.rows()],
                "mean": self.mean.tolist(), "best_center": self.best_center.tolist(),
                "best_variance": self.best_variance}

    @classmethod
    def from_dict(cls, d):
        rows = np.array(d["rows"], dtype=float).reshape(-1, 3)
        centers = rows[:, :2]
        xs = np.unique(centers[:, 0])
        ys = np.unique(centers[:, 1])
        return cls(centers, rows[:, 2], np.array(d.get("mean", np.full(len(rows), np.nan))),
                   xs, ys, np.array(d["best_center"]), float(d["best_variance"]))


def _mb_inclusion(mb: MbComponents, lo, hi):
    """Inclusion probabilities of every MB density in every box, shape (K, M)."""
    w = np.concatenate([p.w for p in mb.spatial])
    m = np.concatenate([p.position_means for p in mb.spatial])
    P = np.concatenate([p.position_covs for p in mb.spatial])
    owner = np.concatenate([np.full(len(p), i) for i, p in enumerate(mb.spatial)])
    probs = box_probability(m, P, lo, hi) * w
    if owner.size == len(mb):
        return probs
    out = np.zeros((probs.shape[0], len(mb)))
    np.add.at(out.T, owner, probs.T)
    return out


def run_sensor_placement(cfg: PlacementConfig | None = None, mb: MbComponents | None = None,
                         chunk: int = 2048) -> PlacementResult:
    """FoV-count variance over all candidate centers.

    Inclusion probabilities of the translated box are evaluated in closed
    form, the count pmf at each center comes from the DFT path, and ties in
    the maximum go to the lexicographically smallest center.
    """
    cfg = cfg or PlacementConfig()
    mb = mb if mb is not None else make_placement_mb(cfg)
    centers, xs, ys = cfg.centers()
    half = 0.5 * np.asarray(cfg.fov_size, dtype=float)
    var = np.empty(len(centers))
    mean = np.empty(len(centers))
    n = np.arange(len(mb) + 1)
    for start in range(0, len(centers), chunk):
        c = centers[start:start + chunk]
        q = _mb_inclusion(mb, c - half, c + half)
        pmf = poisson_binomial_pmf(mb.r[None, :] * q)
        mu = pmf @ n
        mean[start:start + chunk] = mu
        var[start:start + chunk] = pmf @ (n ** 2) - mu ** 2
    var = np.maximum(var, 0.0)
    vmax = var.max()
    ties = np.flatnonzero(var == vmax)
    best = ties[np.lexsort((centers[ties, 1], centers[ties, 0]))[0]]
    return PlacementResult(centers, var, mean, xs, ys, centers[best].copy(), float(vmax))


# export -------------------------------------------------------------------------

def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def export(results, format: str, path):
    """Write a :class:`TrackLog` or :class:`PlacementResult` as CSV or JSON.

    CSV columns follow a fixed order and floats carry 17 significant digits.
    """
    path = Path(path)
    if isinstance(results, TrackLog):
        header = list(TrackLog.columns)
    elif isinstance(results, PlacementResult):
        header = ["cx", "cy", "variance"]
    else:
        raise TypeError(f"cannot export {type(results).__name__}")
    try:
        if format == "csv":
            buf = io.StringIO()
            writer = csv.writer(buf, lineterminator="\n")
            writer.writerow(header)
            for row in results.rows():
                writer.writerow([_fmt(v) for v in row])
            path.write_text(buf.getvalue())
        elif format == "json":
            path.write_text(json.dumps(results.to_dict(), default=_json_default))
        else:
            raise ValueError(f"unknown export format {format!r}")
    except OSError as exc:
        raise OSError(f"could not write {path}: {exc}") from exc


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o).__name__}")


def load_json(path):
    """Read back a JSON export as a TrackLog or PlacementResult."""
    d = json.loads(Path(path).read_text())
    if d.get("columns", [None])[0] == "k":
        return TrackLog.from_dict(d)
    return PlacementResult.from_dict(d)
