"""Scenario description, bistatic range model, likelihood and measurement simulation.

The transmitter sits at the origin and is never stored.  A target at ``x``
seen by a receiver at ``theta`` produces the range ``|x| + |x - theta|``
plus zero-mean Gaussian noise.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .exceptions import DegenerateGeometryError, InvalidParameterError

__all__ = [
    "Point2",
    "TargetPrior",
    "Scenario",
    "Priors",
    "MeasurementSet",
    "DEFAULT_ARENA",
    "true_range",
    "log_likelihood",
    "simulate_measurements",
    "perturb_receivers",
    "load_scenario",
    "paper_default",
]

DEFAULT_ARENA = (0.0, 100.0, 0.0, 100.0)

# stream tags keep measurement noise and receiver perturbations independent
_MEAS_STREAM = 0
_RECEIVER_STREAM = 1


class Point2(NamedTuple):
    x: float
    y: float


@dataclass(frozen=True)
class TargetPrior:
    """Circular Gaussian prior on every target, one mean per target and a shared variance."""

    means: np.ndarray
    var: float

    def __post_init__(self):
        means = np.array(self.means, dtype=float).reshape(-1, 2)
        if not np.all(np.isfinite(means)):
            raise InvalidParameterError("target prior means must be finite")
        var = float(self.var)
        if not var > 0 or not math.isfinite(var):
            raise InvalidParameterError(
                "target prior variance must be positive and finite; use no prior for a flat one"
            )
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "var", var)


def _as_points(pts, name, min_count):
    arr = np.array(pts, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise InvalidParameterError(f"{name} must be a list of [x, y] pairs")
    if len(arr) < min_count:
        raise InvalidParameterError(f"{name} needs at least {min_count} entries, got {len(arr)}")
    if not np.all(np.isfinite(arr)):
        raise InvalidParameterError(f"{name} contains non-finite coordinates")
    return arr


def _as_link_matrix(value, A, M, name):
    arr = np.array(value, dtype=float)
    if arr.ndim == 0:
        arr = np.full((A, M), float(arr))
    if arr.shape != (A, M):
        raise InvalidParameterError(f"{name} must be a scalar or an {A}x{M} matrix, got shape {arr.shape}")
    return arr


def _as_receiver_vector(value, M, name):
    arr = np.array(value, dtype=float)
    if arr.ndim == 0:
        arr = np.full(M, float(arr))
    if arr.shape != (M,):
        raise InvalidParameterError(f"{name} must be a scalar or a length-{M} list, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class Scenario:
    """True geometry plus noise and prior variances.

    ``meas_var`` may be zero (noise-free simulation) but estimators need a
    positive model variance, see :meth:`priors`.  ``target_prior=None`` means a
    flat prior on targets.
    """

    targets: np.ndarray
    receivers: np.ndarray
    meas_var: np.ndarray = 1.0
    receiver_prior_var: np.ndarray = 9.0
    target_prior: TargetPrior | None = None
    arena: tuple = DEFAULT_ARENA

    def __post_init__(self):
        targets = _as_points(self.targets, "targets", 1)
        receivers = _as_points(self.receivers, "receivers", 2)
        A, M = len(targets), len(receivers)
        meas_var = _as_link_matrix(self.meas_var, A, M, "meas_var")
        prior_var = _as_receiver_vector(self.receiver_prior_var, M, "receiver_prior_var")
        if not np.all(np.isfinite(meas_var)) or np.any(meas_var < 0):
            raise InvalidParameterError("meas_var entries must be finite and non-negative")
        if not np.all(np.isfinite(prior_var)) or np.any(prior_var < 0):
            raise InvalidParameterError("receiver_prior_var entries must be finite and non-negative")
        if self.target_prior is not None and self.target_prior.means.shape != (A, 2):
            raise InvalidParameterError("target_prior needs one mean per target")
        arena = tuple(float(v) for v in self.arena)
        if len(arena) != 4 or not (arena[0] < arena[1] and arena[2] < arena[3]):
            raise InvalidParameterError("arena must be (xmin, xmax, ymin, ymax) with min < max")
        for i, t in enumerate(targets):
            at_origin = t[0] == 0.0 and t[1] == 0.0
            if at_origin and np.any(np.all(receivers == t, axis=1)):
                raise DegenerateGeometryError(
                    f"target {i} coincides with both the transmitter and a receiver"
                )
        for name, val in [("targets", targets), ("receivers", receivers), ("meas_var", meas_var),
                          ("receiver_prior_var", prior_var), ("arena", arena)]:
            if isinstance(val, np.ndarray):
                val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def n_targets(self) -> int:
        return len(self.targets)

    @property
    def n_receivers(self) -> int:
        return len(self.receivers)

    def replace(self, **changes) -> Scenario:
        kw = dict(targets=self.targets, receivers=self.receivers, meas_var=self.meas_var,
                  receiver_prior_var=self.receiver_prior_var, target_prior=self.target_prior,
                  arena=self.arena)
        if "targets" in changes and "meas_var" not in changes:
            # per-link matrix no longer matches the new target count
            kw["meas_var"] = float(self.meas_var.flat[0]) if np.ptp(self.meas_var) == 0 else self.meas_var
        kw.update(changes)
        return Scenario(**kw)

    def priors(self, receiver_means=None, model_meas_var=None) -> Priors:
        """What an estimator is allowed to know: noisy receiver means, variances, no truth."""
        if receiver_means is None:
            receiver_means = self.receivers
        mv = self.meas_var if model_meas_var is None else _as_link_matrix(
            model_meas_var, self.n_targets, self.n_receivers, "model_meas_var")
        return Priors(receiver_means=receiver_means, receiver_var=self.receiver_prior_var,
                      meas_var=mv, target_prior=self.target_prior, arena=self.arena)

    def to_dict(self) -> dict:
        d = {
            "targets": self.targets.tolist(),
            "receivers": self.receivers.tolist(),
            "meas_var": self.meas_var.tolist(),
            "receiver_prior_var": self.receiver_prior_var.tolist(),
            "arena": list(self.arena),
        }
        if self.target_prior is not None:
            d["target_prior"] = {"means": self.target_prior.means.tolist(), "var": self.target_prior.var}
        return d

    @classmethod
    def from_dict(cls, doc: dict) -> Scenario:
        known = {"targets", "receivers", "meas_var", "receiver_prior_var", "target_prior", "arena"}
        unknown = set(doc) - known
        if unknown:
            raise InvalidParameterError(f"unknown scenario key(s): {', '.join(sorted(unknown))}")
        for key in ("targets", "receivers"):
            if key not in doc:
                raise InvalidParameterError(f"scenario is missing required key '{key}'")
        tp = doc.get("target_prior")
        prior = None
        if tp is not None:
            if not isinstance(tp, dict) or "means" not in tp or "var" not in tp:
                raise InvalidParameterError("target_prior must be an object with 'means' and 'var'")
            if not math.isinf(float(tp["var"])):
                prior = TargetPrior(tp["means"], tp["var"])
        return cls(
            targets=doc["targets"],
            receivers=doc["receivers"],
            meas_var=doc.get("meas_var", 1.0),
            receiver_prior_var=doc.get("receiver_prior_var", 9.0),
            target_prior=prior,
            arena=doc.get("arena", DEFAULT_ARENA),
        )


@dataclass(frozen=True)
class Priors:
    """Estimator-side knowledge: receiver prior means/variances and the noise model."""

    receiver_means: np.ndarray
    receiver_var: np.ndarray
    meas_var: np.ndarray
    target_prior: TargetPrior | None = None
    arena: tuple = DEFAULT_ARENA

    def __post_init__(self):
        means = _as_points(self.receiver_means, "receiver_means", 2)
        M = len(means)
        var = _as_receiver_vector(self.receiver_var, M, "receiver_var")
        mv = np.array(self.meas_var, dtype=float)
        if mv.ndim != 2 or mv.shape[1] != M:
            raise InvalidParameterError("meas_var must be an A x M matrix")
        if np.any(~(mv > 0)) or not np.all(np.isfinite(mv)):
            raise InvalidParameterError("estimators need strictly positive, finite measurement variances")
        if np.any(var < 0) or not np.all(np.isfinite(var)):
            raise InvalidParameterError("receiver prior variances must be finite and non-negative")
        object.__setattr__(self, "receiver_means", means)
        object.__setattr__(self, "receiver_var", var)
        object.__setattr__(self, "meas_var", mv)
        object.__setattr__(self, "arena", tuple(float(v) for v in self.arena))

    @property
    def n_targets(self) -> int:
        return self.meas_var.shape[0]

    @property
    def n_receivers(self) -> int:
        return len(self.receiver_means)


@dataclass(frozen=True)
class MeasurementSet:
    """A x M matrix of noisy bistatic ranges and the seed that generated it."""

    ranges: np.ndarray
    seed: int = field(default=0)

    def __post_init__(self):
        r = np.array(self.ranges, dtype=float)
        if r.ndim != 2:
            raise InvalidParameterError("ranges must be a 2-D A x M matrix")
        if not np.all(np.isfinite(r)):
            raise InvalidParameterError("ranges must be finite")
        r.setflags(write=False)
        object.__setattr__(self, "ranges", r)

    @property
    def shape(self):
        return self.ranges.shape


def true_range(target, receiver):
    """Noise-free transmitter -> target -> receiver path length.

    Broadcasts over leading dimensions of ``(..., 2)`` inputs.
    """
    t = np.asarray(target, dtype=float)
    r = np.asarray(receiver, dtype=float)
    d = np.hypot(t[..., 0], t[..., 1]) + np.hypot(t[..., 0] - r[..., 0], t[..., 1] - r[..., 1])
    return float(d) if np.ndim(d) == 0 else d


def log_likelihood(R, target, receiver, var):
    """Gaussian log density of one range measurement."""
    var = np.asarray(var, dtype=float)
    if np.any(~(var > 0)):
        raise InvalidParameterError(f"measurement variance must be positive, got {var}")
    resid = np.asarray(R, dtype=float) - true_range(target, receiver)
    out = -0.5 * np.log(2 * np.pi * var) - resid ** 2 / (2 * var)
    return float(out) if np.ndim(out) == 0 else out


def _link_rng(seed, *key):
    return np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, *key])


def simulate_measurements(scenario: Scenario, seed: int) -> MeasurementSet:
    """Noisy ranges; entry (i, m) depends only on ``(seed, i, m)``."""
    A, M = scenario.n_targets, scenario.n_receivers
    ranges = np.empty((A, M))
    for i in range(A):
        for m in range(M):
            noise = _link_rng(seed, _MEAS_STREAM, i, m).standard_normal()
            ranges[i, m] = (true_range(scenario.targets[i], scenario.receivers[m])
                            + math.sqrt(scenario.meas_var[i, m]) * noise)
    return MeasurementSet(ranges, seed)


def perturb_receivers(scenario: Scenario, seed: int) -> np.ndarray:
    """Receiver prior means: true positions offset by N(0, var) on each coordinate."""
    out = np.empty_like(scenario.receivers)
    for m, (pos, var) in enumerate(zip(scenario.receivers, scenario.receiver_prior_var)):
        out[m] = pos + math.sqrt(var) * _link_rng(seed, _RECEIVER_STREAM, m).standard_normal(2)
    return out


def load_scenario(path) -> Scenario:
    with open(path) as fh:
        doc = json.load(fh)
    return Scenario.from_dict(doc)


def paper_default() -> Scenario:
    """Three targets, five receivers, unit range noise, receiver prior variance 9."""
    text = resources.files("passloc.data").joinpath("paper_default.json").read_text()
    return Scenario.from_dict(json.loads(text))


def default_scenario_path() -> Path:
    return Path(str(resources.files("passloc.data").joinpath("paper_default.json")))


def coarse_target_search(priors: Priors, measurements: MeasurementSet, n: int = 21) -> np.ndarray:
    """Per-target maximizer of the joint link likelihood on an ``n x n`` arena grid.

    Receivers are held at their prior means.  Used only to pick a sane first
    expansion point for targets that have no prior.
    """
    xmin, xmax, ymin, ymax = priors.arena
    gx, gy = np.meshgrid(np.linspace(xmin, xmax, n), np.linspace(ymin, ymax, n), indexing="ij")
    grid = np.stack([gx.ravel(), gy.ravel()], axis=1)
    out = np.empty((priors.n_targets, 2))
    for i in range(priors.n_targets):
        score = np.zeros(len(grid))
        for m, recv in enumerate(priors.receiver_means):
            score += log_likelihood(measurements.ranges[i, m], grid, recv, priors.meas_var[i, m])
        out[i] = grid[np.argmax(score)]
    return out
