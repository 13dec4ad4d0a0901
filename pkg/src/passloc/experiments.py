"""Canned study designs (figures 4-10) and wall-clock scaling measurements."""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from .exceptions import InvalidParameterError
from .geometry import Scenario, paper_default, perturb_receivers, simulate_measurements
from .harness import ExperimentSpec, MetricTable, run_trials, sweep
from .parametric_bp import run_parametric_bp
from .sample_bp import run_sample_bp

__all__ = ["FIGURES", "reproduce_figure", "ScalingResult", "fit_exponent",
           "particle_scaling", "node_scaling"]

MEAS_VAR_GRID = (0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0)
RECEIVER_MEAS_VAR_GRID = (0.25, 1.0, 4.0, 16.0, 100.0)
PRIOR_VAR_GRID = (0.01, 1.0, 9.0, 25.0)
TARGET_COUNTS = (1, 2, 3)

# figure -> (title, algorithms, metrics, axis, grid)
FIGURES = {
    4: ("target error CDF", ("parametric", "sample+pso", "sample-pso"), ("cdf",), "none", ()),
    5: ("receiver error CDF", ("parametric", "sample+pso"), ("cdf",), "none", ()),
    6: ("target RMSE per iteration", ("parametric", "sample+pso"), ("rmse_trace",), "none", ()),
    7: ("target MSE vs range noise variance", ("parametric",), ("mse",), "meas_var", MEAS_VAR_GRID),
    8: ("target MSE vs number of targets", ("parametric",), ("mse",), "n_targets", TARGET_COUNTS),
    9: ("receiver MSE vs range noise variance", ("parametric",), ("mse",), "meas_var",
        RECEIVER_MEAS_VAR_GRID),
    10: ("MSE vs receiver prior variance", ("parametric",), ("mse",), "prior_var", PRIOR_VAR_GRID),
}


def reproduce_figure(number: int, base: ExperimentSpec | None = None) -> MetricTable:
    """Data behind one figure.

    ``base`` supplies the scenario, trial count, seed and estimator settings;
    its algorithm, axis and metrics are replaced by the figure design.  With
    several algorithms the metric names are prefixed ``"<algorithm>/"``.
    A particle count in ``base`` applies to the PSO variant only; the
    reference run without PSO keeps 2000 particles.
    """
    if number not in FIGURES:
        raise InvalidParameterError(f"no design for figure {number}; choose from {sorted(FIGURES)}")
    base = base or ExperimentSpec(paper_default())
    title, algos, metrics, axis, grid = FIGURES[number]
    out = MetricTable(metadata={"figure": number, "title": title, "runs": {}})
    for algo in algos:
        spec = replace(base, algorithm=algo, metrics=metrics, axis=axis, grid=grid,
                       n_particles=None if algo == "sample-pso" else base.n_particles)
        table = sweep(spec) if axis != "none" else run_trials(spec)
        out.extend(table, prefix=f"{algo}/" if len(algos) > 1 else "")
        out.metadata["runs"][algo] = table.metadata
    return out


@dataclass
class ScalingResult:
    grid: tuple
    seconds: tuple
    exponent: float


def fit_exponent(x, seconds) -> float:
    """Slope of the least-squares line through ``(log x, log seconds)``."""
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(seconds, float)), 1)[0])


def _median_time(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def particle_scaling(grid=(250, 500, 1000, 2000), n_iter: int = 5, repeats: int = 3,
                     seed: int = 0, scenario: Scenario | None = None) -> ScalingResult:
    """Sample BP without PSO, every particle pair evaluated (no dedupe)."""
    sc = scenario or paper_default()
    meas = simulate_measurements(sc, seed)
    pri = sc.priors(perturb_receivers(sc, seed))
    run_sample_bp(pri, meas, 1, 16, pso=None, seed=seed)  # compile outside the clock
    secs = tuple(_median_time(lambda L=L: run_sample_bp(pri, meas, n_iter, L, pso=None, seed=seed,
                                                        dedupe=False), repeats)
                 for L in grid)
    return ScalingResult(tuple(grid), secs, fit_exponent(grid, secs))


def _star_scenario(n_nodes: int, seed: int) -> Scenario:
    # one target, n_nodes - 1 receivers scattered over the arena
    rng = np.random.default_rng([seed, n_nodes])
    receivers = rng.uniform(5.0, 95.0, size=(n_nodes - 1, 2))
    return Scenario(targets=[[30.0, 40.0]], receivers=receivers, meas_var=1.0, receiver_prior_var=9.0)


def node_scaling(grid=(4, 8, 16, 32), n_iter: int = 40, repeats: int = 5,
                 seed: int = 0) -> ScalingResult:
    """Parametric BP with one target and ``N - 1`` receivers for each node count ``N``.

    With a single target the number of links grows like the node count,
    which is what the per-node cost model describes.
    """
    secs = []
    for n in grid:
        if n < 3:
            raise InvalidParameterError("need at least 3 nodes (1 target, 2 receivers)")
        sc = _star_scenario(n, seed)
        meas = simulate_measurements(sc, seed)
        pri = sc.priors(perturb_receivers(sc, seed))
        secs.append(_median_time(lambda: run_parametric_bp(pri, meas, n_iter), repeats))
    return ScalingResult(tuple(grid), tuple(secs), fit_exponent(grid, secs))
