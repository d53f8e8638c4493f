import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from semibloch.errors import ConfigError
from semibloch.fields import (
    Constant,
    Cosine,
    ExternalFields,
    GaussianPolynomial,
    Polynomial,
    ScalarField,
    WindowedPolynomial,
    smoothstep,
)

coords = st.floats(-12.0, 12.0)


def _fd_check(prim, r, h=1e-5, tol=1e-6):
    r = np.atleast_2d(r)
    d = r.shape[1]
    v, g, H = prim.eval(r)
    for i in range(d):
        e = np.zeros(d)
        e[i] = h
        vp, gp, _ = prim.eval(r + e)
        vm, gm, _ = prim.eval(r - e)
        assert np.allclose((vp - vm) / (2 * h), g[:, i], atol=tol)
        assert np.allclose((gp - gm) / (2 * h), H[:, :, i], atol=tol)
    assert np.allclose(H, np.swapaxes(H, 1, 2))


def test_polynomial_exact():
    p = Polynomial([((2, 1), 3.0), ((0, 0), -1.0)])
    x = np.array([[1.5, -2.0]])
    v, g, H = p(x)
    assert np.isclose(v[0], 3 * 1.5**2 * -2.0 - 1.0)
    assert np.allclose(g[0], [6 * 1.5 * -2.0, 3 * 1.5**2])
    assert np.allclose(H[0], [[6 * -2.0, 6 * 1.5], [6 * 1.5, 0.0]])


def test_polynomial_rejects_bad_exponents():
    with pytest.raises(ConfigError):
        Polynomial([((1, -1), 1.0)])
    with pytest.raises(ConfigError):
        Polynomial([])


def test_smoothstep_limits_and_derivatives():
    x = np.array([-1.0, 0.0, 1.0, 2.0])
    S, S1, S2 = smoothstep(x)
    assert np.allclose(S, [0, 0, 1, 1]) and np.allclose(S1, 0) and np.allclose(S2, 0)
    y = np.linspace(0.05, 0.95, 19)
    h = 1e-6
    assert np.allclose((smoothstep(y + h)[0] - smoothstep(y - h)[0]) / (2 * h), smoothstep(y)[1], atol=1e-6)
    assert np.allclose((smoothstep(y + h)[1] - smoothstep(y - h)[1]) / (2 * h), smoothstep(y)[2], atol=1e-4)


@given(coords, coords)
def test_primitives_finite_differences(x, y):
    r = np.array([x, y])
    _fd_check(Cosine(0.3, [0.7, -0.2], 0.4), r)
    _fd_check(GaussianPolynomial([((1, 1), 0.5), ((2, 0), 1.0)], [0.5, -1.0], 3.0), r)
    _fd_check(Constant(2.0, dim=2), r)


@given(st.floats(-16.0, 16.0))
def test_window_finite_differences(x):
    w = WindowedPolynomial([((2,), 0.5)], [0.0], [-8.0], [8.0], [4.0])
    _fd_check(w, np.array([x]), tol=1e-5)


def test_window_is_flat_inside_and_zero_outside():
    w = WindowedPolynomial([((1,), -0.5)], [0.0], [-9.0], [9.0], [4.0])
    r = np.array([[-9.0], [0.0], [9.0]])
    assert np.allclose(w.eval(r)[0], -0.5 * r[:, 0])
    far = np.array([[-13.5], [14.0], [40.0]])
    v, g, H = w.eval(far)
    assert np.all(v == 0) and np.all(g == 0) and np.all(H == 0)
    assert w.bound >= 0.5 * 13


def test_window_2d_mixed_hessian():
    w = WindowedPolynomial([((1, 1), 1.0)], [0.0, 0.0], [-2.0, -2.0], [2.0, 2.0], [1.5, 1.5])
    for r in ([2.7, 3.1], [-2.4, 0.3], [1.0, -3.0]):
        _fd_check(w, np.array(r), tol=1e-5)


def test_window_validation():
    with pytest.raises(ConfigError):
        WindowedPolynomial([((1,), 1.0)], [0.0], [1.0], [-1.0], [1.0])
    with pytest.raises(ConfigError):
        WindowedPolynomial([((1,), 1.0)], [0.0, 0.0], [-1.0], [1.0], [1.0])


def test_scalar_field_dimension_check():
    with pytest.raises(ConfigError):
        ScalarField(2, [Cosine(1.0, [1.0])])


def test_symmetric_gauge_gives_uniform_field(fields_2d):
    r = np.array([[0.0, 0.0], [3.0, -7.0], [15.0, 12.0]])
    B, gB = fields_2d.magnetic(r)
    assert np.allclose(B[:, 0, 1], 0.5) and np.allclose(B[:, 1, 0], -0.5)
    assert np.allclose(gB, 0)


@given(coords, coords)
def test_magnetic_field_from_finite_differences(fields_2d, x, y):
    r = np.array([[x, y]]) * 2.0
    h = 1e-5
    A = lambda s: fields_2d.vector_potential(s)[0][0]
    dA = np.array([(A(r + h * e) - A(r - h * e)) / (2 * h) for e in np.eye(2)])  # dA[i, j] = d_i A_j
    B = fields_2d.magnetic(r)[0][0]
    assert np.allclose(B, dA - dA.T, atol=1e-6)


def test_external_fields_need_matching_components():
    with pytest.raises(ConfigError):
        ExternalFields(2, None, [ScalarField(2)])
    assert not ExternalFields(1).has_vector_potential
