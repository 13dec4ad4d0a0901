import io
import json
import math

import numpy as np
import pytest

import passloc.harness as harness
from passloc.exceptions import InvalidParameterError
from passloc.geometry import paper_default
from passloc.harness import (
    CSV_COLUMNS,
    ExperimentSpec,
    MetricTable,
    compute_cdf,
    compute_rmse_trace,
    run_trials,
    scenario_at,
    simulate_trials,
    sweep,
    trial_seed,
)


def _spec(**kw):
    kw.setdefault("n_trials", 8)
    kw.setdefault("seed", 3)
    return ExperimentSpec(paper_default(), **kw)


# CDF -------------------------------------------------------------------------


def test_cdf_examples():
    assert compute_cdf([1, 2, 3], [2])[0] == pytest.approx(2 / 3)
    assert compute_cdf([1, 2, 3], [0.5, 3.0, 9.0]) == [0.0, 1.0, 1.0]


def test_cdf_half_normal():
    e = np.abs(np.random.default_rng(0).standard_normal(10_000))
    assert compute_cdf(e, [1.0])[0] == pytest.approx(0.6827, abs=0.02)


def test_cdf_is_monotone_and_rejects_empty():
    c = compute_cdf(np.random.default_rng(1).exponential(size=200), np.linspace(0, 5, 51))
    assert np.all(np.diff(c) >= 0)
    with pytest.raises(InvalidParameterError):
        compute_cdf([], [1.0])


# RMSE trace ------------------------------------------------------------------


def test_rmse_trace_constant_error():
    truth = np.array([[30.0, 40.0]])
    tr = np.tile(truth + [3.0, 0.0], (6, 1, 1))
    np.testing.assert_allclose(compute_rmse_trace([tr], truth), 3.0)


def test_rmse_trace_two_trials():
    truth = np.zeros((1, 2))
    a = np.full((2, 1, 2), [3.0, 0.0])
    b = np.full((2, 1, 2), [0.0, 4.0])
    np.testing.assert_allclose(compute_rmse_trace([a, b], truth), math.sqrt(12.5))
    assert compute_rmse_trace([a, b], truth)[0] == pytest.approx(3.5355, abs=1e-4)


def test_rmse_trace_errors():
    with pytest.raises(InvalidParameterError):
        compute_rmse_trace([np.zeros((3, 1, 2)), np.zeros((4, 1, 2))], np.zeros((1, 2)))
    with pytest.raises(InvalidParameterError):
        compute_rmse_trace([], np.zeros((1, 2)))


def test_default_parametric_trace_settles():
    ts = simulate_trials(_spec(n_trials=100, seed=11))
    rmse = compute_rmse_trace(ts.target_traces, ts.truth)
    assert np.all(np.diff(rmse[5:]) <= 0.1)


# trials ----------------------------------------------------------------------


def test_trial_seeds_are_distinct():
    seeds = {trial_seed(7, t) for t in range(1000)}
    assert len(seeds) == 1000
    assert trial_seed(7, 3) == trial_seed(7, 3) != trial_seed(8, 3)


def test_run_trials_is_deterministic():
    a = run_trials(_spec(metrics=("mse", "rmse_trace")))
    b = run_trials(_spec(metrics=("mse", "rmse_trace")))
    assert a.rows == b.rows
    assert a.metadata["config"] == b.metadata["config"]


def test_workers_do_not_change_results():
    a = run_trials(_spec())
    b = run_trials(_spec(workers=2))
    assert a.rows == b.rows


def test_sample_trials_run():
    t = run_trials(_spec(algorithm="sample+pso", n_trials=2, n_iter=3, n_particles=30))
    assert t.metadata["config"]["n_particles"] == 30
    assert t.value("mse", "target", 0) > 0


def test_mse_rows_and_squared_error_convention():
    spec = _spec(n_trials=5)
    ts = simulate_trials(spec)
    t = run_trials(spec)
    assert t.value("mse", "target", 1) == pytest.approx(ts.target_sq_err[:, 1].mean())
    assert len(t.select("mse")) == 8 and len(t.select("mse_se")) == 8
    assert t.metadata["excluded_trials"] == 0


@pytest.mark.xfail(strict=True, reason="the linearized update leaves about 0.04 m of error after "
                   "40 iterations even without noise")
def test_noiseless_trial_is_exact():
    sc = paper_default().replace(meas_var=0.0, receiver_prior_var=0.0)
    ts = simulate_trials(ExperimentSpec(sc, n_trials=1, model_meas_var=1.0))
    assert ts.target_sq_err.max() < 1e-6 and ts.receiver_sq_err.max() < 1e-6


def test_failed_trials_are_excluded_and_counted(monkeypatch):
    real = harness.run_parametric_bp
    calls = []

    def flaky(*a, **kw):
        calls.append(1)
        if len(calls) % 3 == 0:
            raise FloatingPointError("synthetic")
        return real(*a, **kw)

    monkeypatch.setattr(harness, "run_parametric_bp", flaky)
    t = run_trials(_spec(n_trials=6))
    assert t.metadata["excluded_trials"] == 2
    assert [e["trial"] for e in t.metadata["exclusions"]] == [2, 5]
    assert t.select("mse")[0].n_trials == 4


def test_spec_validation():
    with pytest.raises(InvalidParameterError):
        _spec(algorithm="magic")
    with pytest.raises(InvalidParameterError):
        _spec(axis="meas_var")
    with pytest.raises(InvalidParameterError):
        _spec(axis="meas_var", grid=(0.0, 1.0))
    with pytest.raises(InvalidParameterError):
        _spec(metrics=("mse", "mae"))
    assert _spec(algorithm="sample-pso").particles == 2000
    assert _spec(algorithm="sample+pso").particles == 100


def test_spec_dict_round_trip():
    spec = _spec(axis="prior_var", grid=(1, 9), metrics=("mse", "cdf"))
    back = ExperimentSpec.from_dict(json.loads(json.dumps(spec.to_dict())))
    assert back.to_dict() == spec.to_dict()


def test_scenario_at_axes():
    sc = paper_default()
    assert scenario_at(sc, "n_targets", 1).n_targets == 1
    assert np.all(scenario_at(sc, "prior_var", 4).receiver_prior_var == 4)
    with pytest.raises(InvalidParameterError):
        scenario_at(sc, "n_targets", 4)


# tables ----------------------------------------------------------------------


def test_table_csv_and_json_round_trip():
    t = run_trials(_spec(metrics=("mse", "cdf")))
    text = t.to_csv()
    assert text.startswith("# {")
    assert text.splitlines()[1] == ",".join(CSV_COLUMNS)
    back = MetricTable.from_csv(text)
    assert back.rows == t.rows and back.metadata == t.metadata
    again = MetricTable.from_json(t.to_json())
    assert again.rows == t.rows


def test_cdf_rows_named_by_grid_point():
    t = run_trials(_spec(metrics=("cdf",), cdf_grid=(0.5, 1.0)))
    assert {r.metric for r in t.rows} == {"cdf@0.5", "cdf@1"}


def test_gnuplot_block():
    t = sweep(_spec(axis="prior_var", grid=(1, 9)))
    buf = io.StringIO()
    t.write_gnuplot(buf, "mse", "target", 0)
    data = [ln.split() for ln in buf.getvalue().splitlines() if ln and not ln.startswith("#")]
    assert [float(r[0]) for r in data] == [1.0, 9.0]


def test_sweep_has_bound_rows():
    t = sweep(_spec(axis="n_targets", grid=(1, 3)))
    b = t.select("bcrb", sweep_value=3.0)
    assert len(b) == 8 and all(r.n_trials == 0 for r in b)
    assert len(t.select("bcrb", sweep_value=1.0)) == 6
    with pytest.raises(InvalidParameterError):
        sweep(_spec())


def test_bound_below_mse_across_prior_sweep():
    t = sweep(_spec(n_trials=150, axis="prior_var", grid=(0.01, 1, 9, 25), seed=21))
    for v in (0.01, 1.0, 9.0, 25.0):
        for kind, n in (("target", 3), ("receiver", 5)):
            for k in range(n):
                mse = t.value("mse", kind, k, v)
                se = t.value("mse_se", kind, k, v)
                assert mse >= t.value("bcrb", kind, k, v) - 2 * se


def test_receiver_mse_approaches_prior_with_noise():
    t = sweep(_spec(n_trials=200, axis="meas_var", grid=(1, 100, 10_000), seed=22))
    gap = [np.mean([abs(t.value("mse", "receiver", m, v) - 18.0) for m in range(5)]) / 18
           for v in (1.0, 100.0, 10_000.0)]
    assert gap[0] > gap[2]
    assert gap[2] < 0.1
