import numpy as np
import pytest
from scipy import integrate

from reduced_lab.errors import ValidationError
from reduced_lab.kernels import PowerMixture, ScaleFunction, check_kernel_conditions, sphere_integral

R = np.geomspace(1e-3, 10, 40)


def test_fractional_scale_constants():
    rep = check_kernel_conditions(lambda r: r**0.8, R)
    assert rep.ok
    assert rep.c3 == pytest.approx(1 / (2 - 0.8), rel=1e-8)
    assert rep.delta1 == pytest.approx(0.8) and rep.delta2 == pytest.approx(0.8)
    assert rep.c4 == pytest.approx(1) and rep.c5 == pytest.approx(1)


def test_quadratic_scale_fails_small_scale_integral():
    rep = check_kernel_conditions(lambda r: r**2, R)
    assert not rep.B_ok
    assert "B" in rep.witness


def test_linear_scale():
    rep = check_kernel_conditions(lambda r: r, R)
    assert rep.ok and rep.c3 == pytest.approx(1.0, rel=1e-8)


def test_non_monotone_scale_flagged():
    rep = check_kernel_conditions(lambda r: r * (2 + np.sin(20 * r)), R)
    assert not rep.monotone and not rep.C_ok


def test_coefficient_bounds():
    assert not check_kernel_conditions(lambda r: r, R, a_samples=[0.0, 1.0]).A_ok
    rep = check_kernel_conditions(lambda r: r, R, a_samples=[0.5, 2.0])
    assert rep.A_ok and (rep.c1, rep.c2) == (0.5, 2.0)


def test_bad_grid():
    with pytest.raises(ValidationError):
        check_kernel_conditions(lambda r: r, [1.0, 0.5])


@pytest.mark.parametrize("alpha", [0.2, 0.5, 0.8])
def test_power_mixture_closed_forms_match_quadrature(alpha):
    mix = PowerMixture([(alpha, 1.0), (0.5 * alpha, 0.3)])
    num = ScaleFunction(mix.phi)
    for s in (0.05, 0.7):
        assert mix.tail(s) == pytest.approx(float(num.tail(s)), rel=1e-7)
        assert mix.inner(s) == pytest.approx(float(num.inner(s)), rel=1e-7)


def test_power_mixture_validation():
    with pytest.raises(ValidationError):
        PowerMixture([(1.2, 1.0)])
    with pytest.raises(ValidationError):
        PowerMixture([(0.5, -1.0)])


def test_sphere_integral_circle_against_quadrature():
    lo, hi = np.array([0.0, 0.0]), np.array([1.0, 2.0])
    p = np.array([[0.3, 0.4]])
    g = lambda s: s ** -0.6

    def ray(t):
        d = np.array([np.cos(t), np.sin(t)])
        with np.errstate(divide="ignore"):
            steps = np.where(d > 0, (hi - p[0]) / d, np.where(d < 0, (lo - p[0]) / d, np.inf))
        return g(steps.min())

    ref, _ = integrate.quad(ray, 0, 2 * np.pi, limit=400, points=[0.5, 1.7, 3.5, 5.0])
    assert sphere_integral(p, lo, hi, g)[0] == pytest.approx(ref, rel=1e-7)


def test_sphere_integral_1d_two_directions():
    out = sphere_integral(np.array([[0.25]]), np.array([0.0]), np.array([1.0]), lambda s: 1 / s)
    assert out[0] == pytest.approx(4 + 4 / 3)
