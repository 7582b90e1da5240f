import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from charfol import jets as J
from oracles import fd_gradient, fd_hessian

coord = st.floats(-1.5, 1.5)


def composite(xs):
    x, y, z = xs
    return J.sin(x * y) * J.exp(z / 2) + J.sqrt(2 + x * x) / (1.5 + J.cos(y)) - J.log(3 + z * z) * J.cosh(x) + J.sinh(y * z)


def test_linear_field_exact():
    x, y, z = J.variables([1.0, 2.0, 3.0], 2)
    f = z - 0 * (x * x + y * y)
    assert f.value == 3.0
    assert np.array_equal(f.gradient, [0, 0, 1])
    assert np.array_equal(f.hessian, np.zeros((3, 3)))


def test_quadratic_by_hand():
    x, y, z = J.variables([1.0, 0.0, 0.0], 2)
    f = z - (x * x + y * y)
    assert f.value == -1.0
    np.testing.assert_array_equal(f.gradient, [-2, 0, 1])
    np.testing.assert_array_equal(f.hessian, np.diag([-2.0, -2.0, 0.0]))


@settings(max_examples=100, deadline=None)
@given(coord, coord, coord)
def test_matches_finite_differences(x, y, z):
    p = [x, y, z]
    jet = composite(J.variables(p, 2))
    fv = lambda q: composite(list(q))
    g = fd_gradient(fv, p)
    H = fd_hessian(fv, p)
    scale = max(1.0, np.abs(g).max())
    assert np.abs(jet.gradient - g).max() <= 1e-5 * scale
    assert np.abs(jet.hessian - H).max() <= 1e-5 * max(1.0, np.abs(H).max())


@given(coord, coord, coord)
def test_hessian_exactly_symmetric(x, y, z):
    H = composite(J.variables([x, y, z], 2)).hessian
    assert np.array_equal(H, H.T)


@given(coord, coord)
def test_product_rule(x, y):
    a, b = J.variables([x, y], 2)
    f, g = J.sin(a + b), J.exp(a * b)
    fg = f * g
    np.testing.assert_allclose(fg.gradient, f.value * g.gradient + g.value * f.gradient, atol=1e-12)


@given(st.floats(0.1, 5))
def test_exp_log_roundtrip(v):
    (x,) = J.variables([v], 3)
    r = J.exp(J.log(x))
    np.testing.assert_allclose(r.c, x.c, atol=1e-12)


def test_third_order_partial():
    x, y = J.variables([0.3, -0.7], 3)
    f = x * x * x * y
    fx = f.partial(0)
    fxx = fx.partial(0)
    assert fxx.value == pytest.approx(6 * 0.3 * -0.7)
    assert fxx.gradient[1] == pytest.approx(6 * 0.3)


def test_truncate_is_prefix():
    x, y = J.variables([0.5, 0.2], 3)
    f = J.sin(x * y + y)
    t = f.truncate(2)
    assert t.value == f.value
    np.testing.assert_array_equal(t.hessian, f.hessian)


@pytest.mark.parametrize("fn,arg", [(J.sqrt, -1.0), (J.log, 0.0), (J.log, -2.0), (J.reciprocal, 0.0)])
def test_domain_errors(fn, arg):
    with pytest.raises(J.DomainError):
        fn(J.variables([arg], 2)[0])
    with pytest.raises(J.DomainError):
        fn(arg)


def test_floats_pass_through():
    assert J.sin(0.5) == math.sin(0.5)
    assert J.value(2.5) == 2.5
