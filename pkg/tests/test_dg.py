import numpy as np
import pytest
import scipy.sparse.linalg as spla
from numpy.polynomial import legendre as L

from sntransport.dg import (SpatialMesh, assemble_operators, build_dg_space, project_source,
                            upwind_combination)
from sntransport.quadrature import build_cl_quadrature
from sntransport.sweep import sweep_direction, sweep_order

from conftest import make_ops


class BruteForce:
    """Dense upwind DG assembly straight from the weak form, with its own basis."""

    def __init__(self, x0, x1, y0, y1, nx, ny, K, nq=6):
        self.x0, self.y0 = x0, y0
        self.hx, self.hy = (x1 - x0) / nx, (y1 - y0) / ny
        self.nx, self.ny, self.K = nx, ny, K
        self.s = (K + 1) ** 2
        self.n = nx * ny * self.s
        self.xi, self.w = L.leggauss(nq)

    def p1(self, k, t, h, der=False):
        c = np.zeros(k + 1)
        c[k] = np.sqrt((2 * k + 1) / h)
        return L.legval(t, L.legder(c)) * 2 / h if der else L.legval(t, c)

    def basis(self, cell, i, x, y, d=None):
        a, b = cell % self.nx, cell // self.nx
        ix, iy = i % (self.K + 1), i // (self.K + 1)
        tx = 2 * (x - self.x0 - (a + 0.5) * self.hx) / self.hx
        ty = 2 * (y - self.y0 - (b + 0.5) * self.hy) / self.hy
        fx = self.p1(ix, tx, self.hx, d == "x")
        fy = self.p1(iy, ty, self.hy, d == "y")
        return fx * fy

    def bounds(self, cell):
        a, b = cell % self.nx, cell // self.nx
        xa = self.x0 + a * self.hx
        yb = self.y0 + b * self.hy
        return xa, xa + self.hx, yb, yb + self.hy

    def faces(self, cell):
        """(points x, points y, weights, normal, neighbour or None)."""
        xa, xb, ya, yb = self.bounds(cell)
        a, b = cell % self.nx, cell // self.nx
        ty = ya + (self.xi + 1) * self.hy / 2
        tx = xa + (self.xi + 1) * self.hx / 2
        wy, wx = self.w * self.hy / 2, self.w * self.hx / 2
        yield np.full_like(ty, xa), ty, wy, (-1, 0), cell - 1 if a > 0 else None
        yield np.full_like(ty, xb), ty, wy, (1, 0), cell + 1 if a < self.nx - 1 else None
        yield tx, np.full_like(tx, ya), wx, (0, -1), cell - self.nx if b > 0 else None
        yield tx, np.full_like(tx, yb), wx, (0, 1), cell + self.nx if b < self.ny - 1 else None

    def streaming(self, mx, my):
        A = np.zeros((self.n, self.n))
        s = self.s
        for c in range(self.nx * self.ny):
            xa, xb, ya, yb = self.bounds(c)
            X, Y = np.meshgrid(xa + (self.xi + 1) * self.hx / 2, ya + (self.xi + 1) * self.hy / 2)
            W = np.outer(self.w, self.w) * self.hx * self.hy / 4
            for i in range(s):
                gv = mx * self.basis(c, i, X, Y, "x") + my * self.basis(c, i, X, Y, "y")
                for k in range(s):
                    A[c * s + i, c * s + k] -= np.sum(W * gv * self.basis(c, k, X, Y))
            for fx, fy, fw, (nxn, nyn), nb in self.faces(c):
                on = mx * nxn + my * nyn
                up = c if on > 0 else nb
                if up is None:
                    continue
                for i in range(s):
                    v = self.basis(c, i, fx, fy)
                    for k in range(s):
                        A[c * s + i, up * s + k] += on * np.sum(fw * v * self.basis(up, k, fx, fy))
        return A

    def inflow(self, mx, my, g):
        out = np.zeros(self.n)
        s = self.s
        for c in range(self.nx * self.ny):
            for fx, fy, fw, (nxn, nyn), nb in self.faces(c):
                on = mx * nxn + my * nyn
                if nb is None and on < 0:
                    for i in range(s):
                        out[c * s + i] += -on * np.sum(fw * g(fx, fy) * self.basis(c, i, fx, fy))
        return out

    def mass(self, sigma):
        M = np.zeros((self.n, self.n))
        s = self.s
        for c in range(self.nx * self.ny):
            xa, xb, ya, yb = self.bounds(c)
            X, Y = np.meshgrid(xa + (self.xi + 1) * self.hx / 2, ya + (self.xi + 1) * self.hy / 2)
            W = np.outer(self.w, self.w) * self.hx * self.hy / 4 * sigma(X, Y)
            for i in range(s):
                for k in range(s):
                    M[c * s + i, c * s + k] = np.sum(W * self.basis(c, i, X, Y) * self.basis(c, k, X, Y))
        return M


@pytest.mark.parametrize("K", [0, 1, 2])
def test_streaming_matches_brute_force(K):
    bf = BruteForce(-1, 1, 0, 3, 2, 2, K)
    space = build_dg_space(SpatialMesh(-1, 1, 0, 3, 2, 2), K)
    g = lambda x, y: 1 + x**2 + 0.5 * y
    ops = assemble_operators(space, 0.0, 0.0, 0.0, g)
    quad = build_cl_quadrature(8, 2)
    for j in range(quad.n_angles):
        mx, my = quad.mu_x[j], quad.mu_y[j]
        D = upwind_combination(ops, quad, j).tocsr().toarray()
        np.testing.assert_allclose(D, bf.streaming(mx, my), atol=1e-12)
        np.testing.assert_allclose(ops.boundary_vector(quad, j), bf.inflow(mx, my, g), atol=1e-12)


def test_cross_sections_match_brute_force():
    bf = BruteForce(0, 2, 0, 2, 2, 2, 1)
    space = build_dg_space(SpatialMesh(0, 2, 0, 2, 2, 2), 1)
    sig_s = lambda x, y: 1 + x + 2 * y
    ops = assemble_operators(space, sig_s, 0.5, lambda x, y: x * y)
    np.testing.assert_allclose(ops.sigma_s.toarray(), bf.mass(sig_s), atol=1e-13)
    np.testing.assert_allclose(ops.sigma_t.toarray(),
                               bf.mass(lambda x, y: 1.5 + x + 2 * y), atol=1e-13)
    # x*y is in the K=1 tensor space, so its moments are the mass matrix times
    # its coefficients; with an orthonormal basis the mass matrix is I
    np.testing.assert_allclose(bf.mass(lambda x, y: np.ones_like(x)), np.eye(bf.n), atol=1e-13)


@pytest.mark.parametrize("signs", [(1, 1), (-1, 1), (1, -1), (-1, -1)])
def test_block_lower_triangular_in_sweep_order(signs):
    ops = make_ops(5)
    mx, my = 0.6 * signs[0], 0.3 * signs[1]
    from sntransport.dg import UpwindOperator
    A = UpwindOperator(ops, mx, my, with_total=True).tocsr().toarray()
    s = ops.space.dofs_per_cell
    order = sweep_order(5, 5, mx, my)
    perm = (order[:, None] * s + np.arange(s)).ravel()
    P = A[np.ix_(perm, perm)]
    for bi in range(25):
        assert not np.any(P[bi * s:(bi + 1) * s, (bi + 1) * s:])


def test_constant_inflow_reproduces_constant():
    # psi = 1 solves Omega.grad psi + psi = 1 with inflow 1, for every direction
    ops = make_ops(6, sigma_s=1.0, sigma_a=0.0, source=1.0, boundary=1.0)
    quad = build_cl_quadrature(8, 2)
    one = ops.source  # coefficients of the constant 1 (orthonormal basis)
    for j in range(quad.n_angles):
        psi = sweep_direction(ops, quad.mu_x[j], quad.mu_y[j],
                              ops.source + ops.boundary_vector(quad, j))
        np.testing.assert_allclose(psi, one, atol=1e-13)


def manufactured_error(n):
    mesh = SpatialMesh(0, 1, 0, 1, n, n)
    space = build_dg_space(mesh, 1)
    mx, my = 0.7, 0.4
    u = lambda x, y: np.sin(np.pi * x) * np.cos(np.pi * y) + 2
    f = lambda x, y: (mx * np.pi * np.cos(np.pi * x) * np.cos(np.pi * y)
                      - my * np.pi * np.sin(np.pi * x) * np.sin(np.pi * y) + u(x, y))
    ops = assemble_operators(space, 1.0, 0.0, f, u)
    w = np.array([mx, 0.0, my, 0.0])
    psi = sweep_direction(ops, mx, my, ops.source + ops.boundary_edges @ w)
    X, Y = space.quadrature_points()
    _, _, wq, val, _, _ = space.volume_rule()
    uh = psi.reshape(-1, 4) @ val.T
    return np.sqrt(np.sum(wq * (uh - u(X, Y)) ** 2))


def test_second_order_convergence():
    errs = [manufactured_error(n) for n in (8, 16, 32)]
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(rates > 1.8), rates


def test_negative_cross_section_rejected():
    with pytest.raises(ValueError, match="negative"):
        make_ops(2, sigma_s=-1.0)


def test_cell_means_and_evaluate():
    ops = make_ops(3, K=2)
    space = ops.space
    f = lambda x, y: 1 + x - 2 * y + x * y
    c = spla.spsolve(ops.sigma_t.tocsc(), project_source(space, f))  # L2 projection (sigma_t = 1)
    x = np.array([-0.9, 0.1, 0.55])
    y = np.array([0.2, -0.7, 0.95])
    np.testing.assert_allclose(space.evaluate(c, x, y), f(x, y), atol=1e-12)
    xc, yc = space.mesh.cell_centers()
    np.testing.assert_allclose(space.cell_means(c), f(xc, yc), atol=1e-12)


def test_k0_warns(caplog):
    build_dg_space(SpatialMesh(0, 1, 0, 1, 2, 2), 0)
    assert "asymptotic" in caplog.text
    with pytest.raises(ValueError):
        build_dg_space(SpatialMesh(0, 1, 0, 1, 2, 2), -1)
