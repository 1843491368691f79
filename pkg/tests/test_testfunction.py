import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tbgmag.testfunction import (
    Constant,
    Gaussian,
    Logistic,
    Poly,
    SmoothStep,
    Softplus,
    fermi_dirac,
    free_energy_kernel,
    gaussian,
    plateau,
)

rng = np.random.default_rng(11)
X = rng.uniform(-4, 4, 50)


def families():
    g = gaussian(0.3, 0.8)
    return {
        "gaussian": g,
        "logistic": Logistic(1.7).shift(0.2),
        "softplus": Softplus(1.3),
        "poly": Poly([1.0, -2.0, 0.5, 0.25]),
        "product": g * Logistic(2.0),
        "sum": 2.0 * g - Softplus(0.7) + 1.5,
        "affine": g.affine(-1.5, 0.4),
        "fermi": fermi_dirac(2.0, 0.5),
        "free_energy": free_energy_kernel(2.0, 0.5),
        "plateau": plateau(-3.0, -1.0, 1.0, 3.5),
        "chain": g.d(2) * Softplus(1.0).d(1),
    }


@pytest.mark.parametrize("name", list(families()))
@pytest.mark.parametrize("order", [0, 1, 2, 3])
def test_derivatives_match_finite_differences(name, order):
    f = families()[name]
    h = 1e-5
    fd = (f.derivative(X + h, order) - f.derivative(X - h, order)) / (2 * h)
    np.testing.assert_allclose(f.derivative(X, order + 1), fd, rtol=1e-6, atol=1e-6)


def test_gaussian_closed_form():
    g = Gaussian(1.0, 2.0)
    assert g(1.0) == pytest.approx(1 / (2 * math.sqrt(2 * math.pi)))
    # f'' at the centre of a unit Gaussian is -1/sqrt(2 pi)
    assert gaussian(0.0, 1.0).derivative(0.0, 2) == pytest.approx(-1 / math.sqrt(2 * math.pi), rel=1e-14)


def test_constant_and_poly():
    assert Constant(2.5)(np.array([1.0, 3.0])).tolist() == [2.5, 2.5]
    assert Constant(2.5).derivative(1.0, 1) == 0.0
    p = Poly([0, 0, 1])
    assert p.derivative(3.0, 1) == pytest.approx(6.0)
    assert p.derivative(3.0, 3) == 0.0


def test_negative_order_rejected():
    with pytest.raises(ValueError):
        gaussian().derivative(0.0, -1)


@pytest.mark.parametrize(
    "ctor",
    [lambda: Gaussian(0, 0), lambda: Logistic(-1), lambda: Softplus(0), lambda: SmoothStep(1, 1), lambda: plateau(0, 1, 0.5, 2)],
)
def test_invalid_parameters(ctor):
    with pytest.raises(ValueError):
        ctor()


def test_combination_type_error():
    with pytest.raises(TypeError):
        gaussian() + "x"


def test_smoothstep_values_and_smoothness():
    s = SmoothStep(0.0, 1.0)
    assert s(-1.0) == 0.0
    assert s(2.0) == 1.0
    assert s(0.5) == pytest.approx(0.5)
    assert s.smoothness == 9
    for k in range(1, 10):
        assert s.derivative(0.0, k) == pytest.approx(0.0, abs=1e-12)
        assert s.derivative(1.0, k) == pytest.approx(0.0, abs=1e-10)


def test_plateau_support_and_flat_top():
    p = plateau(-2.0, -1.0, 1.0, 3.0)
    assert p.support == (-2.0, 3.0)
    np.testing.assert_allclose(p(np.linspace(-1, 1, 11)), 1.0)
    assert p(-2.5) == 0.0 and p(3.5) == 0.0
    assert p.smoothness == 9


def test_support_algebra():
    p = plateau(0.0, 1.0, 2.0, 3.0)
    assert (p * gaussian()).support == (0.0, 3.0)
    assert (p + plateau(5.0, 6.0, 7.0, 8.0)).support == (0.0, 8.0)
    assert p.affine(-1.0, 0.0).support == (-3.0, 0.0)
    assert p.shift(1.0).support == (1.0, 4.0)
    assert math.isinf(gaussian().support[1])


@settings(max_examples=40)
@given(st.floats(0.1, 50), st.floats(-700, 700))
def test_logistic_and_softplus_are_finite(beta, y):
    x = y / beta
    assert np.isfinite(Logistic(beta)(x))
    assert np.isfinite(Softplus(beta)(x))


def test_softplus_asymptotics():
    # free_energy_kernel(beta, mu) at lambda equals f_beta(mu - lambda)
    k = free_energy_kernel(1.0, 0.0)
    assert k(50.0) == pytest.approx(-math.log1p(math.exp(-50.0)), abs=1e-30)
    assert k(-50.0) == pytest.approx(-50.0, rel=1e-15)
