"""Monte Carlo trials, error metrics and parameter sweeps.

A trial draws noisy receiver prior means and range measurements from the
true scenario, runs one estimator, and records squared position errors
against the truth.  Trials are independent and seeded from
``(spec.seed, trial)``, so a table is a pure function of its spec no matter
how many worker processes produced it.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .bcrb import bcrb_table
from .exceptions import InvalidParameterError
from .geometry import Scenario, TargetPrior, perturb_receivers, simulate_measurements
from .parametric_bp import run_parametric_bp
from .sample_bp import PsoConfig, run_sample_bp

log = logging.getLogger(__name__)

__all__ = [
    "ALGORITHMS",
    "AXES",
    "ExperimentSpec",
    "MetricRow",
    "MetricTable",
    "TrialSet",
    "simulate_trials",
    "run_trials",
    "summarize",
    "compute_cdf",
    "compute_rmse_trace",
    "sweep",
    "scenario_at",
    "trial_seed",
    "DEFAULT_CDF_GRID",
    "CSV_COLUMNS",
]

ALGORITHMS = ("parametric", "sample+pso", "sample-pso")
AXES = ("none", "meas_var", "prior_var", "n_targets")
METRICS = ("mse", "cdf", "rmse_trace")
CSV_COLUMNS = ("sweep_value", "node_kind", "node_id", "metric", "value", "n_trials")
DEFAULT_CDF_GRID = tuple(np.round(np.linspace(0.0, 5.0, 51), 10))
_DEFAULT_PARTICLES = {"sample+pso": 100, "sample-pso": 2000}


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything that determines a :class:`MetricTable`.

    ``model_meas_var`` replaces the range variance the estimator assumes
    (needed for noise-free simulation, where the true variance is zero).
    ``n_particles=None`` picks 100 with PSO and 2000 without.
    """

    scenario: Scenario
    algorithm: str = "parametric"
    n_trials: int = 500
    seed: int = 0
    axis: str = "none"
    grid: tuple = ()
    metrics: tuple = ("mse",)
    n_iter: int = 40
    n_particles: int | None = None
    n_receiver_particles: int | None = None
    pso: PsoConfig = PsoConfig()
    damping: float = 0.0
    model_meas_var: float | None = None
    cdf_grid: tuple = DEFAULT_CDF_GRID
    workers: int = 1

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise InvalidParameterError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if self.n_trials < 1:
            raise InvalidParameterError("n_trials must be at least 1")
        if self.axis not in AXES:
            raise InvalidParameterError(f"axis must be one of {AXES}, got {self.axis!r}")
        bad = set(self.metrics) - set(METRICS)
        if bad:
            raise InvalidParameterError(f"unknown metric(s): {', '.join(sorted(bad))}")
        grid = tuple(float(v) for v in self.grid)
        if self.axis != "none":
            if not grid:
                raise InvalidParameterError("a sweep axis needs a non-empty grid")
            if self.axis == "meas_var" and min(grid) <= 0:
                raise InvalidParameterError("meas_var grid values must be strictly positive")
            if self.axis == "prior_var" and min(grid) < 0:
                raise InvalidParameterError("prior_var grid values must be non-negative")
            if self.axis == "n_targets" and any(v < 1 or v != int(v) for v in grid):
                raise InvalidParameterError("n_targets grid values must be positive integers")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "metrics", tuple(self.metrics))
        object.__setattr__(self, "cdf_grid", tuple(float(v) for v in self.cdf_grid))
        if self.workers < 1:
            raise InvalidParameterError("workers must be at least 1")

    @property
    def particles(self) -> int | None:
        if self.algorithm == "parametric":
            return None
        return self.n_particles or _DEFAULT_PARTICLES[self.algorithm]

    def to_dict(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k not in ("scenario", "pso")}
        d["scenario"] = self.scenario.to_dict()
        d["pso"] = asdict(self.pso)
        d["grid"] = list(self.grid)
        d["metrics"] = list(self.metrics)
        d["cdf_grid"] = list(self.cdf_grid)
        return d

    @classmethod
    def from_dict(cls, doc: dict) -> ExperimentSpec:
        doc = dict(doc)
        doc["scenario"] = Scenario.from_dict(doc["scenario"])
        doc["pso"] = PsoConfig(**doc.get("pso", {}))
        for key in ("grid", "metrics", "cdf_grid"):
            if key in doc:
                doc[key] = tuple(doc[key])
        return cls(**doc)


class MetricRow(NamedTuple):
    sweep_value: float | None
    node_kind: str
    node_id: int | str
    metric: str
    value: float
    n_trials: int


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


@dataclass
class MetricTable:
    rows: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.rows)

    def select(self, metric=None, node_kind=None, node_id=None, sweep_value=None) -> list:
        out = []
        for r in self.rows:
            if metric is not None and r.metric != metric:
                continue
            if node_kind is not None and r.node_kind != node_kind:
                continue
            if node_id is not None and r.node_id != node_id:
                continue
            if sweep_value is not None and r.sweep_value != sweep_value:
                continue
            out.append(r)
        return out

    def value(self, metric, node_kind, node_id, sweep_value=None) -> float:
        hits = self.select(metric, node_kind, node_id, sweep_value)
        if len(hits) != 1:
            raise KeyError(f"{len(hits)} rows match {(metric, node_kind, node_id, sweep_value)}")
        return hits[0].value

    def extend(self, other: MetricTable, prefix: str = "") -> None:
        self.rows.extend(r._replace(metric=prefix + r.metric) for r in other.rows)

    def write_csv(self, fh) -> None:
        """CSV with the metadata as one ``#``-prefixed JSON line on top."""
        fh.write(f"# {json.dumps(self.metadata, default=_json_default)}\n")
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for r in self.rows:
            writer.writerow([_fmt(v) for v in r])

    def to_csv(self) -> str:
        buf = io.StringIO()
        self.write_csv(buf)
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {"metadata": self.metadata, "rows": [r._asdict() for r in self.rows]}
        return json.dumps(doc, indent=1, default=_json_default)

    @classmethod
    def from_json(cls, text: str) -> MetricTable:
        doc = json.loads(text)
        return cls([MetricRow(**r) for r in doc["rows"]], doc.get("metadata", {}))

    @classmethod
    def from_csv(cls, text: str) -> MetricTable:
        meta = "\n".join(line[2:] for line in text.splitlines() if line.startswith("# "))
        body = [line for line in text.splitlines() if not line.startswith("#")]
        rows = []
        for rec in csv.DictReader(body):
            sv = rec["sweep_value"]
            nid = rec["node_id"]
            rows.append(MetricRow(float(sv) if sv else None, rec["node_kind"],
                                  int(nid) if nid.lstrip("-").isdigit() else nid,
                                  rec["metric"], float(rec["value"]), int(rec["n_trials"])))
        return cls(rows, json.loads(meta) if meta else {})

    def write_gnuplot(self, fh, metric_prefix: str, node_kind: str, node_id="all") -> None:
        """Whitespace-separated ``x value`` blocks, one per sweep value.

        ``x`` is the number after ``@`` in metrics such as ``cdf@1.5`` or
        ``rmse_iter@12``; for plain metrics it is the sweep value.
        """
        groups = {}
        for r in self.rows:
            if r.node_kind != node_kind or r.node_id != node_id:
                continue
            name, _, tail = r.metric.partition("@")
            if name != metric_prefix:
                continue
            x = float(tail) if tail else r.sweep_value
            groups.setdefault(r.sweep_value, []).append((x, r.value))
        fh.write(f"# {metric_prefix} for {node_kind} {node_id}\n")
        for sv, pts in groups.items():
            fh.write(f"# sweep_value {_fmt(sv)}\n")
            for x, v in sorted(pts, key=lambda p: (p[0] is None, p[0])):
                fh.write(f"{_fmt(x)} {v!r}\n")
            fh.write("\n\n")


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")


# ---------------------------------------------------------------------------
# trials


@dataclass
class TrialSet:
    """Raw per-trial outcomes; failed trials are listed in ``excluded`` only."""

    target_sq_err: np.ndarray        # (n_ok, A)
    receiver_sq_err: np.ndarray      # (n_ok, M)
    target_traces: np.ndarray        # (n_ok, n_iter + 1, A, 2)
    truth: np.ndarray                # (A, 2)
    runtimes: np.ndarray             # (n_ok,) seconds
    excluded: list = field(default_factory=list)

    @property
    def n_ok(self) -> int:
        return len(self.target_sq_err)


def trial_seed(seed: int, trial: int) -> int:
    return int(np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, trial]).generate_state(1)[0])


def _one_trial(spec: ExperimentSpec, scenario: Scenario, trial: int):
    s = trial_seed(spec.seed, trial)
    means = perturb_receivers(scenario, s)
    meas = simulate_measurements(scenario, s)
    priors = scenario.priors(means, spec.model_meas_var)
    t0 = time.perf_counter()
    try:
        if spec.algorithm == "parametric":
            res = run_parametric_bp(priors, meas, spec.n_iter, damping=spec.damping)
        else:
            pso = spec.pso if spec.algorithm == "sample+pso" else None
            res = run_sample_bp(priors, meas, spec.n_iter, spec.particles,
                                spec.n_receiver_particles, pso, seed=s)
    except ArithmeticError as exc:
        return trial, None, f"{type(exc).__name__}: {exc}"
    elapsed = time.perf_counter() - t0
    t_err = ((res.target_mean - scenario.targets) ** 2).sum(axis=1)
    r_err = ((res.receiver_mean - scenario.receivers) ** 2).sum(axis=1)
    return trial, (t_err, r_err, res.target_trace, elapsed), None


def _star(args):
    return _one_trial(*args)


def simulate_trials(spec: ExperimentSpec, scenario: Scenario | None = None) -> TrialSet:
    scenario = spec.scenario if scenario is None else scenario
    jobs = [(spec, scenario, t) for t in range(spec.n_trials)]
    if spec.workers > 1:
        with ProcessPoolExecutor(spec.workers) as pool:
            results = list(pool.map(_star, jobs, chunksize=max(1, len(jobs) // (4 * spec.workers))))
    else:
        results = [_star(j) for j in jobs]
    results.sort(key=lambda r: r[0])
    ok = [r[1] for r in results if r[1] is not None]
    excluded = [(r[0], r[2]) for r in results if r[1] is None]
    if excluded:
        log.warning("%d of %d trials failed and were excluded", len(excluded), spec.n_trials)
    A, M = scenario.n_targets, scenario.n_receivers
    if not ok:
        return TrialSet(np.empty((0, A)), np.empty((0, M)), np.empty((0, spec.n_iter + 1, A, 2)),
                        scenario.targets.copy(), np.empty(0), excluded)
    return TrialSet(
        target_sq_err=np.array([o[0] for o in ok]),
        receiver_sq_err=np.array([o[1] for o in ok]),
        target_traces=np.array([o[2] for o in ok]),
        truth=scenario.targets.copy(),
        runtimes=np.array([o[3] for o in ok]),
        excluded=excluded,
    )


def compute_cdf(errors, grid) -> list:
    """Empirical CDF of ``errors`` evaluated at each grid point."""
    e = np.sort(np.asarray(errors, dtype=float).ravel())
    if e.size == 0:
        raise InvalidParameterError("cannot build a CDF from no errors")
    g = np.asarray(grid, dtype=float)
    return (np.searchsorted(e, g, side="right") / e.size).tolist()


def compute_rmse_trace(traces, truth) -> np.ndarray:
    """RMSE over all trials and nodes at each iteration.

    ``traces`` is a sequence of ``(n_iter + 1, nodes, 2)`` arrays and
    ``truth`` either one ``(nodes, 2)`` array or one per trial.
    """
    traces = list(traces)
    if not traces:
        raise InvalidParameterError("no traces given")
    lengths = {np.shape(t)[0] for t in traces}
    if len(lengths) != 1:
        raise InvalidParameterError(f"traces have mismatched lengths {sorted(lengths)}")
    tr = np.asarray(traces, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if truth.ndim == 2:
        truth = np.broadcast_to(truth, (tr.shape[0],) + truth.shape)
    sq = ((tr - truth[:, None]) ** 2).sum(axis=-1)
    return np.sqrt(sq.mean(axis=(0, 2)))


def summarize(ts: TrialSet, spec: ExperimentSpec, sweep_value=None) -> list:
    rows = []
    n = ts.n_ok
    if n == 0:
        return rows
    if "mse" in spec.metrics:
        for kind, err in (("target", ts.target_sq_err), ("receiver", ts.receiver_sq_err)):
            for k in range(err.shape[1]):
                col = err[:, k]
                se = float(col.std(ddof=1) / math.sqrt(n)) if n > 1 else math.nan
                rows.append(MetricRow(sweep_value, kind, k, "mse", float(col.mean()), n))
                rows.append(MetricRow(sweep_value, kind, k, "mse_se", se, n))
    if "cdf" in spec.metrics:
        for kind, err in (("target", ts.target_sq_err), ("receiver", ts.receiver_sq_err)):
            cdf = compute_cdf(np.sqrt(err), spec.cdf_grid)
            for x, p in zip(spec.cdf_grid, cdf):
                rows.append(MetricRow(sweep_value, kind, "all", f"cdf@{x:g}", p, n))
    if "rmse_trace" in spec.metrics:
        rmse = compute_rmse_trace(ts.target_traces, ts.truth)
        for it, v in enumerate(rmse):
            rows.append(MetricRow(sweep_value, "target", "all", f"rmse_iter@{it}", float(v), n))
    return rows


def _metadata(spec: ExperimentSpec, trial_sets) -> dict:
    runtimes = np.concatenate([ts.runtimes for ts in trial_sets]) if trial_sets else np.empty(0)
    excluded = [e for ts in trial_sets for e in ts.excluded]
    return {
        "config": spec.to_dict(),
        "excluded_trials": len(excluded),
        "exclusions": [{"trial": t, "error": msg} for t, msg in excluded],
        "runtime_mean_s": float(runtimes.mean()) if runtimes.size else None,
        "runtime_total_s": float(runtimes.sum()),
    }


def run_trials(spec: ExperimentSpec) -> MetricTable:
    """Run ``spec.n_trials`` trials on the spec's scenario (any sweep axis is ignored)."""
    ts = simulate_trials(spec)
    return MetricTable(summarize(ts, spec), _metadata(spec, [ts]))


def scenario_at(scenario: Scenario, axis: str, value: float) -> Scenario:
    """The scenario with one sweep parameter set to ``value``."""
    if axis == "meas_var":
        return scenario.replace(meas_var=float(value))
    if axis == "prior_var":
        return scenario.replace(receiver_prior_var=float(value))
    if axis == "n_targets":
        k = int(value)
        if k > scenario.n_targets:
            raise InvalidParameterError(f"scenario has only {scenario.n_targets} targets, asked for {k}")
        changes = {"targets": scenario.targets[:k], "meas_var": scenario.meas_var[:k]}
        if scenario.target_prior is not None:
            changes["target_prior"] = TargetPrior(scenario.target_prior.means[:k], scenario.target_prior.var)
        return scenario.replace(**changes)
    if axis == "none":
        return scenario
    raise InvalidParameterError(f"unknown sweep axis {axis!r}")


def sweep(spec: ExperimentSpec) -> MetricTable:
    """Trials and the position bound at every grid point of ``spec.axis``.

    Every grid point reuses the same trial seeds.  Bound rows carry the
    metric name ``bcrb`` and ``n_trials=0``.
    """
    if spec.axis == "none":
        raise InvalidParameterError("sweep needs a sweep axis")
    rows, sets = [], []
    for v in spec.grid:
        sc = scenario_at(spec.scenario, spec.axis, v)
        ts = simulate_trials(spec, sc)
        sets.append(ts)
        rows.extend(summarize(ts, spec, v))
        for kind, node, bound in bcrb_table(sc):
            rows.append(MetricRow(v, kind, node, "bcrb", bound, 0))
    return MetricTable(rows, _metadata(spec, sets))


def with_algorithm(spec: ExperimentSpec, algorithm: str, **changes) -> ExperimentSpec:
    return replace(spec, algorithm=algorithm, **changes)
