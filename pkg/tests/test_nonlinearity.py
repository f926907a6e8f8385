import numpy as np
import pytest
from hypothesis import given, strategies as st

from reduced_lab.dirichlet import build_space
from reduced_lab.errors import ValidationError
from reduced_lab.nonlinearity import (
    bounded, clamp_argument, envelope, expression, exponential, power, reflect, scale, tabulated,
    truncate_above, truncate_below, validate,
)

CUBIC = power(3)


def _families():
    table = tabulated([([-2, -1, 0, 1, 2], [3, 0.5, 0, -1, -1.5]), ([-1, 0, 1], [1, 0, -2])], groups=[0, 1])
    return {
        "cubic": CUBIC, "power_c": power(2.5, np.array([1.0, 2.0])), "exp": exponential(),
        "tanh": bounded(np.array([1.0, 0.5])), "atan": bounded(1.0, "atan"), "table": table,
        "expr": expression("-y - sin(y)/2"),
    }


def test_validate_examples(fix2):
    r = validate(CUBIC, fix2.space, M=2.0)
    assert r.sig_ok and r.car_ok and r.M_ok and r.qM_ok
    np.testing.assert_allclose(envelope(CUBIC, [-2, -2], [2, 2]), [8, 8])
    bad = validate(expression("y"), fix2.space)
    assert not bad.sig_ok and bad.witnesses["sig"]["y"] == 1.0
    r = validate(exponential(), fix2.space, rho=[1, 1], M=2.0)
    assert r.M_norm == pytest.approx(2 * (np.e**2 - 1), rel=1e-12)
    assert r.M_norm == pytest.approx(12.778, abs=1e-3)


def test_validate_flags_jump(fix2):
    r = validate(expression("-sign(y) - y"), fix2.space)
    assert not r.car_ok and "car" in r.witnesses


def test_validate_int_for_bracket(fix2):
    r = validate(CUBIC, fix2.space, bracket=([-1, -1], [2, 1]))
    assert r.int_ok and r.int_norm == pytest.approx(9.0)
    assert any("supplied bracket" in note for note in r.notes)


def test_truncation_examples():
    f8 = truncate_below(CUBIC, 8, np.ones(1))
    assert f8(np.array([3.0]))[0] == -8 and f8(np.array([1.0]))[0] == -1
    f0 = truncate_below(CUBIC, 0, np.ones(3))
    np.testing.assert_array_equal(f0(np.array([-2.0, 0.0, 2.0])), [8, 0, 0])
    with pytest.raises(ValidationError):
        truncate_below(CUBIC, -1, np.ones(1))
    with pytest.raises(ValidationError):
        truncate_above(CUBIC, 1, np.zeros(1))
    up = truncate_above(CUBIC, 2, np.ones(1))
    assert up(np.array([-3.0]))[0] == 2


def test_truncated_slope_is_flat_past_the_crossing():
    f = truncate_below(CUBIC, 8, np.ones(1))
    assert f.neg_slope([3.0], [5.0])[0] == 0.0
    assert f.neg_slope([0.0], [5.0])[0] == pytest.approx(12.0, rel=1e-9)


def test_reflect_examples():
    y = np.linspace(-3, 3, 13)
    np.testing.assert_allclose(reflect(CUBIC)(y, np.zeros(13, int)), CUBIC(y, np.zeros(13, int)))
    g = reflect(expression("1 - exp(y)"))
    np.testing.assert_allclose(g(y, np.zeros(13, int)), np.exp(-y) - 1, rtol=1e-14)
    t = _families()["table"]
    assert reflect(reflect(t)) is t


def test_envelope_examples():
    assert envelope(CUBIC, [-1], [2])[0] == 8
    assert envelope(CUBIC, [0], [0])[0] == 0
    np.testing.assert_allclose(envelope(power(3, np.array([1.0, 2.0])), [-1, -1], [1, 1]), [1, 2])
    with pytest.raises(ValidationError, match="bracket violation"):
        envelope(CUBIC, [1], [0])


def test_envelope_golden_section_for_interior_peak():
    bump = expression("-y * exp(-y**2)")
    g = envelope(bump, [-0.1], [3.0])[0]
    assert g == pytest.approx(np.exp(-0.5) / np.sqrt(2), rel=1e-10)


def test_scale_and_clamp():
    f = scale(CUBIC, 0.5)
    assert f(np.array([2.0]))[0] == -4
    with pytest.raises(ValidationError):
        scale(CUBIC, 0)
    c = clamp_argument(CUBIC, np.array([-1.0]), np.array([1.0]))
    assert c(np.array([5.0]))[0] == -1 and c.derivative(np.array([5.0]))[0] == 0


@pytest.mark.parametrize("name", list(_families()))
def test_families_vanish_at_zero_and_have_sig(name):
    f = _families()[name]
    space = build_space(1, (-1.5, 1.5), 1.0)
    assert validate(f, space, M=3.0).sig_ok
    assert np.all(f(np.zeros(2)) == 0)


@pytest.mark.parametrize("name", list(_families()))
def test_derivative_and_slope_bound(name):
    f = _families()[name]
    rng = np.random.default_rng(7)
    lo, hi = -1.7, 2.3
    nodes = rng.integers(0, 2, 400)
    y = rng.uniform(lo, hi, 400)
    eps = 1e-6
    fd = (f(y + eps, nodes) - f(y - eps, nodes)) / (2 * eps)
    kink = name == "table"
    if not kink:
        np.testing.assert_allclose(f.derivative(y, nodes), fd, rtol=1e-5, atol=1e-6)
    bound = f.neg_slope(np.full(2, lo), np.full(2, hi), np.arange(2))
    assert np.all(-fd <= bound[nodes] * (1 + 1e-6) + 1e-6)


@given(st.integers(0, 2**32 - 1), st.sampled_from(sorted(_families())), st.floats(0.0, 50.0))
def test_sig_and_truncation_laws(seed, name, n):
    f = _families()[name]
    rng = np.random.default_rng(seed)
    nodes = rng.integers(0, 2, 1000)
    y = rng.uniform(-4, 4, 1000)
    phi = rng.uniform(0.1, 2.0, 2)
    fn, fn1 = truncate_below(f, n, phi), truncate_below(f, n + 1, phi)
    for g in (fn, truncate_above(f, n, phi), reflect(f)):
        assert np.all(g(y, nodes) * y <= 0)
    assert np.all(fn1(y, nodes) <= fn(y, nodes))
    assert np.all(fn(y, nodes) >= f(y, nodes))


@given(st.integers(0, 2**32 - 1), st.sampled_from(sorted(_families())))
def test_envelope_dominates(seed, name):
    f = _families()[name]
    rng = np.random.default_rng(seed)
    lo = rng.uniform(-3, 1, 2)
    hi = lo + rng.uniform(0, 3, 2)
    g = envelope(f, lo, hi)
    nodes = rng.integers(0, 2, 1000)
    y = lo[nodes] + (hi - lo)[nodes] * rng.uniform(size=1000)
    assert np.all(np.abs(f(y, nodes)) <= g[nodes] * (1 + 1e-12) + 1e-15)
