import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from passloc.exceptions import DegenerateGeometryError, InvalidParameterError
from passloc.geometry import (
    MeasurementSet,
    Scenario,
    TargetPrior,
    coarse_target_search,
    load_scenario,
    log_likelihood,
    paper_default,
    perturb_receivers,
    simulate_measurements,
    true_range,
)

coord = st.floats(-200, 200, allow_nan=False)
point = st.tuples(coord, coord)


def test_true_range_examples():
    assert true_range((30, 40), (10, 40)) == pytest.approx(70.0, abs=1e-12)
    assert true_range((3, 4), (3, 4)) == pytest.approx(5.0, abs=1e-12)
    assert true_range((30, 40), (50, 70)) == pytest.approx(50 + math.sqrt(1300), abs=1e-12)
    assert true_range((30, 40), (50, 70)) == pytest.approx(86.0555, abs=1e-4)


def test_true_range_target_at_origin_is_receiver_distance():
    assert true_range((0, 0), (6, 8)) == pytest.approx(10.0)


def test_true_range_broadcasts():
    t = np.array([[30.0, 40.0], [3.0, 4.0]])
    np.testing.assert_allclose(true_range(t, [[10, 40], [3, 4]]), [70.0, 5.0])


@given(point, point)
def test_range_never_below_receiver_distance(t, r):
    assert true_range(t, r) >= math.hypot(*r) - 1e-9


def test_range_equality_on_segment():
    r = np.array([40.0, 30.0])
    for s in (0.0, 0.3, 1.0):
        assert true_range(s * r, r) == pytest.approx(50.0)
    assert true_range((10.0, 10.0), r) > 50.0


def test_log_likelihood_examples():
    assert log_likelihood(70, (30, 40), (10, 40), 1.0) == pytest.approx(-0.5 * math.log(2 * math.pi), abs=1e-12)
    assert log_likelihood(70, (30, 40), (10, 40), 1.0) == pytest.approx(-0.91894, abs=1e-5)
    assert log_likelihood(71, (30, 40), (10, 40), 1.0) == pytest.approx(-1.41894, abs=1e-5)


@given(point, point, st.floats(-50, 50), st.floats(0.01, 100))
def test_log_likelihood_peaks_at_true_range(t, r, delta, var):
    R = true_range(t, r)
    assert log_likelihood(R + delta, t, r, var) <= log_likelihood(R, t, r, var)


@given(point, point, st.floats(0, 400), st.floats(0.01, 100))
def test_log_likelihood_reflection_invariant(t, r, R, var):
    a = log_likelihood(R, t, r, var)
    b = log_likelihood(R, (-t[0], -t[1]), (-r[0], -r[1]), var)
    assert a == pytest.approx(b, rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("var", [0.0, -1.0])
def test_log_likelihood_rejects_nonpositive_variance(var):
    with pytest.raises(InvalidParameterError):
        log_likelihood(70, (30, 40), (10, 40), var)


def test_simulate_zero_noise_is_exact():
    sc = paper_default().replace(meas_var=0.0)
    m = simulate_measurements(sc, 3)
    expect = true_range(sc.targets[:, None, :], sc.receivers[None, :, :])
    np.testing.assert_array_equal(m.ranges, expect)


def test_simulate_shape_and_determinism():
    sc = paper_default()
    a, b = simulate_measurements(sc, 11), simulate_measurements(sc, 11)
    assert a.ranges.shape == (3, 5) and a.ranges.size == 15
    np.testing.assert_array_equal(a.ranges, b.ranges)
    assert not np.array_equal(a.ranges, simulate_measurements(sc, 12).ranges)


def test_simulate_link_statistics():
    sc = Scenario(targets=[[30, 40]], receivers=[[10, 40], [50, 70]], meas_var=1.0)
    draws = np.array([simulate_measurements(sc, s).ranges[0, 0] for s in range(100_000)])
    assert abs(draws.mean() - 70.0) < 4e-2
    assert abs(draws.var() - 1.0) < 0.05


def test_links_have_independent_streams():
    # the noise on one link must not depend on how many targets exist
    sc = paper_default()
    one = sc.replace(targets=sc.targets[:1])
    np.testing.assert_array_equal(simulate_measurements(sc, 5).ranges[0], simulate_measurements(one, 5).ranges[0])


def test_perturb_receivers():
    sc = paper_default()
    np.testing.assert_array_equal(perturb_receivers(sc.replace(receiver_prior_var=0.0), 4), sc.receivers)
    np.testing.assert_array_equal(perturb_receivers(sc, 4), perturb_receivers(sc, 4))
    off = np.array([perturb_receivers(sc, s)[0] - sc.receivers[0] for s in range(100_000)])
    assert (off ** 2).sum(axis=1).mean() == pytest.approx(18.0, rel=0.03)


def test_scenario_validation():
    with pytest.raises(DegenerateGeometryError):
        Scenario(targets=[[0, 0]], receivers=[[0, 0], [5, 5]])
    with pytest.raises(InvalidParameterError):
        Scenario(targets=[[1, 1]], receivers=[[5, 5]])
    with pytest.raises(InvalidParameterError):
        Scenario(targets=[[1, 1]], receivers=[[5, 5], [6, 6]], meas_var=-1)
    with pytest.raises(InvalidParameterError):
        Scenario(targets=[[1, np.nan]], receivers=[[5, 5], [6, 6]])
    with pytest.raises(InvalidParameterError):
        Scenario(targets=[[1, 1]], receivers=[[5, 5], [6, 6]], receiver_prior_var=np.inf)
    # origin alone, or a receiver alone, is fine
    Scenario(targets=[[0, 0]], receivers=[[5, 5], [6, 6]])
    Scenario(targets=[[5, 5]], receivers=[[5, 5], [6, 6]])


def test_per_link_and_per_receiver_variances():
    sc = Scenario(targets=[[1, 1], [2, 2]], receivers=[[5, 5], [6, 7], [9, 1]],
                  meas_var=[[1, 2, 3], [4, 5, 6]], receiver_prior_var=[1, 0, 4])
    assert sc.meas_var[1, 2] == 6 and sc.receiver_prior_var[1] == 0
    with pytest.raises(InvalidParameterError):
        Scenario(targets=[[1, 1]], receivers=[[5, 5], [6, 7]], meas_var=[1, 2, 3])


def test_priors_require_positive_model_variance():
    sc = paper_default().replace(meas_var=0.0)
    with pytest.raises(InvalidParameterError):
        sc.priors()
    assert np.all(sc.priors(model_meas_var=0.5).meas_var == 0.5)


def test_scenario_roundtrip_and_loading(tmp_path):
    sc = paper_default()
    assert sc.n_targets == 3 and sc.n_receivers == 5
    np.testing.assert_array_equal(sc.targets, [[30, 40], [16, 57], [70, 81]])
    back = Scenario.from_dict(json.loads(json.dumps(sc.to_dict())))
    np.testing.assert_array_equal(back.receivers, sc.receivers)
    p = tmp_path / "s.json"
    doc = sc.to_dict()
    doc["target_prior"] = {"means": [[30, 40], [16, 57], [70, 81]], "var": 4.0}
    p.write_text(json.dumps(doc))
    loaded = load_scenario(p)
    assert isinstance(loaded.target_prior, TargetPrior) and loaded.target_prior.var == 4.0
    doc["target_prior"]["var"] = float("inf")
    assert Scenario.from_dict(doc).target_prior is None


def test_from_dict_names_bad_keys():
    with pytest.raises(InvalidParameterError, match="recievers"):
        Scenario.from_dict({"targets": [[1, 1]], "recievers": [[2, 2], [3, 3]]})
    with pytest.raises(InvalidParameterError, match="receivers"):
        Scenario.from_dict({"targets": [[1, 1]]})


def test_measurement_set_validation():
    with pytest.raises(InvalidParameterError):
        MeasurementSet([1.0, 2.0])
    with pytest.raises(InvalidParameterError):
        MeasurementSet([[1.0, np.inf]])
    m = MeasurementSet([[1.0, 2.0]], seed=9)
    with pytest.raises(ValueError):
        m.ranges[0, 0] = 5.0


@settings(deadline=None, max_examples=20)
@given(st.integers(0, 2**63 - 1))
def test_seed_reproducibility(seed):
    sc = paper_default()
    np.testing.assert_array_equal(simulate_measurements(sc, seed).ranges, simulate_measurements(sc, seed).ranges)


def test_coarse_search_lands_near_truth():
    sc = paper_default().replace(meas_var=0.0, receiver_prior_var=0.0)
    est = coarse_target_search(sc.priors(model_meas_var=1.0), simulate_measurements(sc, 0))
    assert np.all(np.linalg.norm(est - sc.targets, axis=1) <= 5.0 * math.sqrt(2) / 2 + 1e-9)
