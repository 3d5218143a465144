import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import factorial2

from sntransport.quadrature import build_cl_quadrature, gauss_legendre


def sphere_average(a, b, c):
    """Exact mean of x^a y^b z^c over the unit sphere."""
    if a % 2 or b % 2 or c % 2:
        return 0.0
    f = lambda n: factorial2(n - 1) if n > 0 else 1.0
    return f(a) * f(b) * f(c) / factorial2(a + b + c + 1)


def monomial_errors(quad, degree):
    d = quad.directions
    out = {}
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            for c in range(degree + 1 - a - b):
                out[a, b, c] = abs(quad.integrate(d[:, 0]**a * d[:, 1]**b * d[:, 2]**c)
                                   - sphere_average(a, b, c))
    return out


def test_small_rule_nodes():
    q = build_cl_quadrature(4, 2)
    assert q.n_angles == 8
    # theta = pi/4, 3pi/4, ...; mu_z = -+1/sqrt(3)
    z = 1 / np.sqrt(3)
    s = np.sqrt(1 - z * z) / np.sqrt(2)
    np.testing.assert_allclose(q.directions[0], [s, s, -z], atol=1e-15)
    np.testing.assert_allclose(q.directions[1], [s, s, z], atol=1e-15)
    np.testing.assert_allclose(q.weights, 1 / 8)


def test_weights_sum_and_unit_norm(cl84):
    assert abs(cl84.weights.sum() - 1) < 1e-14
    np.testing.assert_allclose(np.linalg.norm(cl84.directions, axis=1), 1, atol=1e-14)


def test_exact_through_degree_seven(cl84):
    # 4-point Gauss in mu_z and 8 equispaced azimuths: exact for degree <= 7
    errs = monomial_errors(cl84, 7)
    assert max(errs.values()) < 1e-12


def test_degree_eight_is_not_exact(cl84):
    errs = monomial_errors(cl84, 8)
    assert errs[0, 0, 8] > 1e-3


def test_symmetry(cl84):
    d = cl84.directions
    key = lambda a: {tuple(np.round(r, 13)) for r in a}
    for flip in ([-1, 1, 1], [1, -1, 1], [1, 1, -1]):
        assert key(d * flip) == key(d)


def test_twins_share_in_plane_components(cl84):
    t = cl84.twins
    np.testing.assert_array_equal(t[t], np.arange(cl84.n_angles))
    np.testing.assert_allclose(cl84.mu_x[t], cl84.mu_x, atol=1e-15)
    np.testing.assert_allclose(cl84.mu_y[t], cl84.mu_y, atol=1e-15)
    np.testing.assert_allclose(cl84.directions[t, 2], -cl84.directions[:, 2], atol=1e-15)


def test_odd_polar_count_has_self_twin():
    q = build_cl_quadrature(4, 3)
    fixed = np.flatnonzero(q.twins == np.arange(q.n_angles))
    assert fixed.size == 4
    np.testing.assert_allclose(q.directions[fixed, 2], 0, atol=1e-15)


def test_immutable(cl42):
    with pytest.raises(ValueError):
        cl42.weights[0] = 1.0


@pytest.mark.parametrize("args", [(0, 2), (4, 0), (-1, 1)])
def test_rejects_bad_orders(args):
    with pytest.raises(ValueError):
        build_cl_quadrature(*args)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 24), st.integers(1, 12))
def test_rule_properties(nt, nz):
    q = build_cl_quadrature(nt, nz)
    assert q.n_angles == nt * nz
    assert abs(q.weights.sum() - 1) < 1e-13
    assert np.all(q.weights > 0)
    # odd moments of mu_z vanish by Gauss symmetry
    assert abs(q.integrate(q.directions[:, 2])) < 1e-14
    # second moments are 1/3 once the rule is rich enough
    if nt >= 3 and nz >= 2:
        for k in range(3):
            assert abs(q.integrate(q.directions[:, k] ** 2) - 1 / 3) < 1e-13


def test_gauss_legendre_weights():
    x, w = gauss_legendre(5)
    assert abs(w.sum() - 2) < 1e-14
    assert abs(w @ x**8 - 2 / 9) < 1e-14
