import numpy as np
import pytest

from passloc.exceptions import InvalidParameterError
from passloc.experiments import FIGURES, fit_exponent, node_scaling, reproduce_figure
from passloc.geometry import paper_default
from passloc.harness import ExperimentSpec


def test_fit_exponent_recovers_power_law():
    x = np.array([250, 500, 1000, 2000])
    assert fit_exponent(x, 3e-7 * x ** 2) == pytest.approx(2.0)
    assert fit_exponent(x, 0.01 * x) == pytest.approx(1.0)


def test_every_figure_has_a_design():
    assert sorted(FIGURES) == [4, 5, 6, 7, 8, 9, 10]
    with pytest.raises(InvalidParameterError):
        reproduce_figure(3)


def test_figure_8_sweeps_target_count():
    base = ExperimentSpec(paper_default(), n_trials=2)
    t = reproduce_figure(8, base)
    assert sorted({r.sweep_value for r in t.rows}) == [1.0, 2.0, 3.0]
    assert t.select("bcrb", "target", 0, 1.0)


def test_node_scaling_small_grid():
    res = node_scaling(grid=(4, 8), n_iter=5, repeats=1)
    assert len(res.seconds) == 2 and np.all(np.asarray(res.seconds) > 0)
    with pytest.raises(InvalidParameterError):
        node_scaling(grid=(2,))
