import numpy as np
import pytest

from memefuse.gradcheck import LAYER_CHECKS, gradient_check, numeric_gradient, relative_error, run_gradient_suite
from memefuse.tensor import Rng


def test_relative_error():
    assert relative_error(np.zeros(3), np.zeros(3)) == 0.0
    assert relative_error(np.array([1.0, 0.0]), np.array([1.0, 0.0])) == 0.0
    assert relative_error(np.array([1.0]), np.array([-1.0])) == 1.0


def test_numeric_gradient_of_quadratic():
    x = np.array([0.5, -1.5, 2.0])
    g = numeric_gradient(lambda: float(np.sum(x**3)), x)
    np.testing.assert_allclose(g, 3 * x**2, rtol=1e-8)
    np.testing.assert_array_equal(x, [0.5, -1.5, 2.0])


def test_detects_wrong_gradient():
    x = np.array([1.0, 2.0])
    errs = gradient_check(lambda: float(np.sum(x**2)), {"x": x}, {"x": 3 * x})
    assert errs["x"] > 0.1


@pytest.mark.parametrize("name", ["text_extractor", "member"])
def test_composite_checks(name):
    assert max(LAYER_CHECKS[name](Rng(1)).values()) <= 1e-4


def test_suite_reports_every_layer():
    worst = run_gradient_suite(range(2), ["dense", "attention"])
    assert set(worst) == {"dense", "attention"} and max(worst.values()) <= 1e-6
