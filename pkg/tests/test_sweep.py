import numpy as np
import pytest
import scipy.sparse.linalg as spla
from hypothesis import given, settings, strategies as st

from sntransport.dg import UpwindOperator
from sntransport.quadrature import build_cl_quadrature
from sntransport.sweep import (SingularBlockError, sweep, sweep_direction, sweep_many,
                               sweep_order)

from conftest import make_ops


def test_matches_sparse_solve(small_ops, cl84):
    rng = np.random.default_rng(1)
    for j in range(cl84.n_angles):
        A = UpwindOperator(small_ops, cl84.mu_x[j], cl84.mu_y[j]).tocsr().tocsc()
        b = rng.standard_normal(small_ops.n_dofs)
        ref = spla.spsolve(A, b)
        np.testing.assert_allclose(sweep(small_ops, cl84, j, b), ref, rtol=0,
                                   atol=1e-12 * np.abs(ref).max())


@settings(max_examples=25, deadline=None)
@given(st.floats(-1, 1), st.floats(-1, 1), st.integers(0, 2**31))
def test_any_direction(mx, my, seed):
    ops = make_ops(3, K=1, sigma_s=0.3, sigma_a=0.7)
    b = np.random.default_rng(seed).standard_normal(ops.n_dofs)
    psi = sweep_direction(ops, mx, my, b)
    A = UpwindOperator(ops, mx, my).tocsr()
    assert np.linalg.norm(A @ psi - b) <= 1e-11 * max(1.0, np.linalg.norm(b))


def test_sweep_many_adds_boundary(cl42):
    ops = make_ops(3, boundary=2.0)
    core = ops.source.copy()
    out = sweep_many(ops, cl42, [3, 0, 5], core)
    for col, j in enumerate([3, 0, 5]):
        np.testing.assert_array_equal(out[:, col], sweep(ops, cl42, j, core + ops.boundary_vector(cl42, j)))


def test_singular_block_raises():
    ops = make_ops(2, sigma_s=0.0, sigma_a=0.0)
    with pytest.raises(SingularBlockError):
        sweep_direction(ops, 0.0, 0.0, np.ones(ops.n_dofs))


def test_void_region_is_fine():
    # sigma_t = 0 with nonzero streaming still gives invertible blocks
    ops = make_ops(4, sigma_s=0.0, sigma_a=0.0)
    q = build_cl_quadrature(4, 2)
    for j in range(q.n_angles):
        assert np.all(np.isfinite(sweep(ops, q, j, np.ones(ops.n_dofs))))


@pytest.mark.parametrize("mx,my,first,last", [(1, 1, 0, 11), (-1, 1, 3, 8),
                                              (1, -1, 8, 3), (-1, -1, 11, 0)])
def test_sweep_order_corners(mx, my, first, last):
    order = sweep_order(4, 3, mx, my)
    assert sorted(order) == list(range(12))
    assert order[0] == first and order[-1] == last
