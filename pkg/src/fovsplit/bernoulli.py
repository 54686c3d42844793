"""Gaussian mixture Bernoulli filter for set-valued measurements.

The filter tracks at most one object. Its state is an existence probability
``r`` and a normalized spatial mixture. Detections are only possible inside a
field of view, and each measurement is a region of position space (for
example "near anchor 3"). The likelihood of a measurement is the indicator of
its region, so the update only needs the mixture to be resolved along region
boundaries, which is what the splitter provides.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .gaussmix import GaussianMixture, reduce
from .regions import Region
from .splitter import SplitConfig, partition, split_for_multifov

__all__ = [
    "BernoulliState",
    "MotionModel",
    "DetectionModel",
    "ImpreciseMeasurement",
    "MeasurementSet",
    "predict",
    "update",
    "map_measurement_region",
]


@dataclass(frozen=True, eq=False)
class BernoulliState:
    """Existence probability and spatial density of a Bernoulli random set.

    ``info`` carries diagnostics of the step that produced the state (for
    example ``delta`` and splitting statistics); it plays no role in
    filtering.
    """

    r: float
    spatial: GaussianMixture
    info: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        r = float(self.r)
        if not 0.0 <= r <= 1.0:
            raise ValueError(f"existence probability {r} outside [0, 1]")
        if len(self.spatial) == 0:
            raise ValueError("spatial mixture is empty")
        if abs(self.spatial.total_weight - 1.0) > 1e-9:
            raise ValueError(f"spatial mixture weights sum to {self.spatial.total_weight!r}")
        object.__setattr__(self, "r", r)

    def to_dict(self):
        return {"r": self.r, "gm": self.spatial.to_dict()}

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["r"]), GaussianMixture.from_dict(d["gm"], normalized=True))


@dataclass(frozen=True, eq=False)
class MotionModel:
    """Linear Gaussian motion with survival and birth.

    Attributes
    ----------
    F, Q : ndarray
        Transition matrix and process noise covariance.
    p_s : float
        Survival probability.
    p_b : float
        Probability that an object appears when none exists.
    birth : GaussianMixture, optional
        Normalized birth density; required when ``p_b > 0``.
    """

    F: np.ndarray
    Q: np.ndarray
    p_s: float = 1.0
    p_b: float = 0.0
    birth: GaussianMixture | None = None

    def __post_init__(self):
        F = np.atleast_2d(np.asarray(self.F, dtype=float))
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        n = F.shape[0]
        if F.shape != (n, n) or Q.shape != (n, n):
            raise ValueError("F and Q must be square with equal size")
        if not np.allclose(Q, Q.T, rtol=1e-10, atol=0) or np.linalg.eigvalsh(Q)[0] <= 0:
            raise ValueError("Q must be symmetric positive definite")
        for name in ("p_s", "p_b"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name}={p} outside [0, 1]")
        if self.birth is not None:
            if self.birth.dim != n:
                raise ValueError("birth density dimension does not match F")
            if abs(self.birth.total_weight - 1.0) > 1e-9:
                raise ValueError("birth density must be normalized")
        elif self.p_b > 0:
            raise ValueError("p_b > 0 requires a birth density")
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "Q", Q)


@dataclass(frozen=True, eq=False)
class DetectionModel:
    """Field-of-view limited detection with Poisson clutter.

    Attributes
    ----------
    fov : Region
        Detection is only possible for positions inside ``fov``.
    pd_inside : float
        Detection probability inside the field of view.
    clutter_rate : float
        Mean number of false measurements per scan.
    clutter_density : float or callable
        Density of false measurements, either a constant (``1/|A|`` for an
        alphabet ``A`` of anchors) or a function of the measurement.
    """

    fov: Region
    pd_inside: float
    clutter_rate: float
    clutter_density: float | Callable = 1.0

    def __post_init__(self):
        if not 0.0 <= self.pd_inside <= 1.0:
            raise ValueError("pd_inside must lie in [0, 1]")
        if not (self.clutter_rate >= 0 and np.isfinite(self.clutter_rate)):
            raise ValueError("clutter_rate must be finite and >= 0")
        if not callable(self.clutter_density) and not self.clutter_density >= 0:
            raise ValueError("clutter_density must be >= 0")

    def clutter_intensity(self, z) -> float:
        c = self.clutter_density(z) if callable(self.clutter_density) else self.clutter_density
        kappa = float(self.clutter_rate * c)
        if not (np.isfinite(kappa) and kappa >= 0):
            raise ValueError(f"invalid clutter intensity {kappa!r}")
        return kappa


@dataclass(frozen=True)
class ImpreciseMeasurement:
    """A set-valued measurement: either an explicit region or an anchor id."""

    region: Region | None = None
    anchor: int | None = None

    def __post_init__(self):
        if (self.region is None) == (self.anchor is None):
            raise ValueError("give exactly one of region or anchor")


@dataclass(frozen=True)
class MeasurementSet:
    items: tuple = ()

    def __init__(self, items: Iterable[ImpreciseMeasurement] = ()):
        object.__setattr__(self, "items", tuple(items))

    def __iter__(self):
        return iter(self.items)

    def __len__(self):
        return len(self.items)

    @classmethod
    def of_anchors(cls, ids: Iterable[int]):
        return cls(ImpreciseMeasurement(anchor=int(a)) for a in ids)


def map_measurement_region(meas: ImpreciseMeasurement, anchors=None) -> Region:
    """Region of position space described by a measurement.

    ``anchors`` is anything with a ``region(anchor_id)`` method, such as
    :class:`fovsplit.scenarios.AnchorMap`.
    """
    if meas.region is not None:
        return meas.region
    if anchors is None:
        raise ValueError(f"anchor measurement {meas.anchor} needs an anchor map")
    try:
        return anchors.region(meas.anchor)
    except KeyError:
        raise ValueError(f"unknown anchor id {meas.anchor}") from None


def predict(state: BernoulliState, model: MotionModel) -> BernoulliState:
    """Propagate existence probability and spatial mixture one step."""
    gm = state.spatial
    if gm.dim != model.F.shape[0]:
        raise ValueError("state dimension does not match the motion model")
    r = state.r
    r_pred = model.p_b * (1.0 - r) + model.p_s * r
    F, Q = model.F, model.Q
    m = gm.m @ F.T
    P = F @ gm.P @ F.T + Q
    P = 0.5 * (P + np.swapaxes(P, -1, -2))
    if r_pred <= 0.0:
        placeholder = model.birth if model.birth is not None else gm._replace(m=m, P=P)
        return BernoulliState(0.0, placeholder.normalize(), {"empty_prediction": True})
    w_surv = gm.w * (model.p_s * r / r_pred)
    parts_w, parts_m, parts_P = [w_surv], [m], [P]
    if model.birth is not None and model.p_b > 0 and r < 1:
        b = model.birth
        parts_w.append(b.w * (model.p_b * (1.0 - r) / r_pred))
        parts_m.append(b.m)
        parts_P.append(b.P)
    w = np.concatenate(parts_w)
    keep = w > 0
    w = w[keep] / w[keep].sum()
    out = GaussianMixture(w, np.concatenate(parts_m)[keep], np.concatenate(parts_P)[keep],
                          position_dim=gm.position_dim, normalized=True, validate=False)
    return BernoulliState(min(r_pred, 1.0), out)


def update(state: BernoulliState, meas: MeasurementSet | Sequence[ImpreciseMeasurement],
           det: DetectionModel, config: SplitConfig | None = None, anchors=None,
           max_components: int | None = 100, exclusion: Region | None = None,
           split: bool = True) -> BernoulliState:
    """Measurement update with indicator likelihoods.

    Parameters
    ----------
    state : BernoulliState
        Predicted state.
    meas : MeasurementSet
        Possibly empty set of region-valued measurements.
    det : DetectionModel
    config : SplitConfig, optional
        Splitting parameters; defaults to ``SplitConfig()``.
    anchors : optional
        Resolves anchor-valued measurements to regions.
    max_components : int or None
        Cap applied by mixture reduction after the update.
    exclusion : Region, optional
        Positions the object cannot occupy; components whose mean lies there
        are removed after the update.
    split : bool
        Refine the mixture along all region boundaries before the update.

    Returns
    -------
    BernoulliState
        ``info`` holds ``delta``, the splitting diagnostics and the number
        of components before reduction.
    """
    config = config or SplitConfig()
    gm = state.spatial
    meas = list(meas)
    meas_regions = []
    seen = set()
    for z in meas:
        key = ("a", z.anchor) if z.anchor is not None else ("r", id(z.region))
        reg = map_measurement_region(z, anchors)
        if key not in seen:
            seen.add(key)
            meas_regions.append(reg)
    z_regions = [map_measurement_region(z, anchors) for z in meas]
    kappas = np.array([det.clutter_intensity(z) for z in meas])

    info = {}
    if split:
        split_regions = [det.fov] + meas_regions
        if exclusion is not None:
            split_regions.append(exclusion)
        gm, sinfo = split_for_multifov(gm, config, split_regions, return_info=True)
        info["split"] = sinfo

    ms = gm.position_means
    pd = det.pd_inside * det.fov.contains(ms).astype(float)
    ind = np.stack([reg.contains(ms) for reg in z_regions]).astype(float) if meas \
        else np.zeros((0, len(gm)))
    w = gm.w
    r = state.r

    if meas and np.any(kappas == 0):
        # clutter-free measurements are certainly object-originated
        zero = kappas == 0
        lik = pd * ind[zero].prod(axis=0)
        new_w = w * lik
        if new_w.sum() <= 0:
            raise ValueError("measurement has zero likelihood under the predicted density")
        r_post, delta = 1.0, -np.inf
    else:
        G = (ind / kappas[:, None]).sum(axis=0) if meas else np.zeros(len(gm))
        delta = float(w @ pd - w @ (pd * G))
        denom = 1.0 - r * delta
        if denom <= 0:
            raise ValueError(f"invalid update: 1 - r*delta = {denom}")
        r_post = float(np.clip((1.0 - delta) * r / denom, 0.0, 1.0))
        new_w = w * (1.0 - pd + pd * G)
        if new_w.sum() <= 0:
            # no surviving hypothesis mass: existence is ruled out, keep the prediction
            new_w = w.copy()
            info["degenerate"] = True
    info["delta"] = delta

    post = gm._replace(w=new_w / new_w.sum(), normalized=True)
    if exclusion is not None:
        _, outside = partition(post, exclusion)
        if outside.total_weight > 0:
            post = outside.normalize()
        else:
            info["exclusion_emptied"] = True
    info["n_components_pre_reduce"] = len(post)
    if max_components is not None and len(post) > max_components:
        post = reduce(post, max_components)
        post = post._replace(w=post.w / post.w.sum(), normalized=True)
    return BernoulliState(r_post, post, info)
