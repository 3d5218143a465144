"""Cartesian mesh, orthonormal tensor-Legendre DG space and upwind operators.

Degrees of freedom are numbered cell-major: cell ``c = b * nx + a`` (``a`` is
the x index), local index ``i = iy * (K + 1) + ix``, global ``c * s + i``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
from numpy.polynomial import legendre as npleg

from .quadrature import AngularQuadrature, gauss_legendre

log = logging.getLogger(__name__)

FieldFunction = Callable[[np.ndarray, np.ndarray], np.ndarray]

LEFT, RIGHT, BOTTOM, TOP = range(4)


@dataclass(frozen=True)
class SpatialMesh:
    x_min: float
    x_max: float
    y_min: float
    y_max: float
    nx: int
    ny: int

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError("mesh bounds must satisfy x_min < x_max and y_min < y_max")
        if self.nx < 1 or self.ny < 1:
            raise ValueError("mesh needs at least one cell per direction")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.nx

    @property
    def dy(self) -> float:
        return (self.y_max - self.y_min) / self.ny

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny

    def cell_index(self, a: int, b: int) -> int:
        return b * self.nx + a

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Centers of all cells in flat cell order."""
        xc = self.x_min + (np.arange(self.nx) + 0.5) * self.dx
        yc = self.y_min + (np.arange(self.ny) + 0.5) * self.dy
        X, Y = np.meshgrid(xc, yc, indexing="xy")
        return X.ravel(), Y.ravel()


def legendre_orthonormal(n_max: int, xi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Values and derivatives of L2(-1, 1)-orthonormal Legendre polynomials.

    Returns arrays of shape (len(xi), n_max + 1).
    """
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    vals = np.empty((xi.size, n_max + 1))
    ders = np.empty_like(vals)
    for n in range(n_max + 1):
        c = np.zeros(n + 1)
        c[n] = np.sqrt((2 * n + 1) / 2.0)
        vals[:, n] = npleg.legval(xi, c)
        ders[:, n] = npleg.legval(xi, npleg.legder(c)) if n > 0 else 0.0
    return vals, ders


@dataclass(frozen=True)
class DGSpace:
    mesh: SpatialMesh
    K: int

    @property
    def dofs_per_cell(self) -> int:
        return (self.K + 1) ** 2

    @property
    def n_dofs(self) -> int:
        return self.mesh.n_cells * self.dofs_per_cell

    # --- 1D reference pieces on a cell of width h (orthonormal in L2(cell)) ---

    def line_rule(self) -> tuple[np.ndarray, np.ndarray]:
        return gauss_legendre(self.K + 2)

    def basis_1d(self, xi: np.ndarray, h: float) -> tuple[np.ndarray, np.ndarray]:
        """Physical values and derivatives of the 1D basis at reference points."""
        v, d = legendre_orthonormal(self.K, xi)
        scale = np.sqrt(2.0 / h)
        return v * scale, d * scale * (2.0 / h)

    def volume_rule(self):
        """Per-cell quadrature: offsets from cell centre, physical weights, and
        basis values / x-derivatives / y-derivatives (nq x s)."""
        m = self.mesh
        xi, w = self.line_rule()
        vx, dx = self.basis_1d(xi, m.dx)
        vy, dy = self.basis_1d(xi, m.dy)
        # quadrature point q = qy * n + qx, local dof i = iy * (K+1) + ix
        val = np.einsum("yj,xi->yxji", vy, vx).reshape(xi.size**2, -1)
        ddx = np.einsum("yj,xi->yxji", vy, dx).reshape(xi.size**2, -1)
        ddy = np.einsum("yj,xi->yxji", dy, vx).reshape(xi.size**2, -1)
        offx = np.tile(xi * m.dx / 2.0, xi.size)
        offy = np.repeat(xi * m.dy / 2.0, xi.size)
        weights = np.outer(w, w).ravel() * (m.dx * m.dy / 4.0)
        return offx, offy, weights, val, ddx, ddy

    def quadrature_points(self) -> tuple[np.ndarray, np.ndarray]:
        """Physical volume quadrature points, shape (n_cells, nq)."""
        offx, offy, *_ = self.volume_rule()
        xc, yc = self.mesh.cell_centers()
        return xc[:, None] + offx[None, :], yc[:, None] + offy[None, :]

    def cell_means(self, coeffs: np.ndarray) -> np.ndarray:
        """Cell averages of a DG field from its coefficient vector."""
        s = self.dofs_per_cell
        area = self.mesh.dx * self.mesh.dy
        return coeffs[::s] / np.sqrt(area)

    def evaluate(self, coeffs: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Point evaluation of a DG field (points on faces take the lower/left cell)."""
        m = self.mesh
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        a = np.clip(((x - m.x_min) / m.dx).astype(int), 0, m.nx - 1)
        b = np.clip(((y - m.y_min) / m.dy).astype(int), 0, m.ny - 1)
        xi = 2.0 * (x - (m.x_min + (a + 0.5) * m.dx)) / m.dx
        eta = 2.0 * (y - (m.y_min + (b + 0.5) * m.dy)) / m.dy
        vx, _ = self.basis_1d(xi.ravel(), m.dx)
        vy, _ = self.basis_1d(eta.ravel(), m.dy)
        s = self.dofs_per_cell
        c = (b * m.nx + a).ravel()
        local = coeffs.reshape(-1, s)[c].reshape(-1, self.K + 1, self.K + 1)
        return np.einsum("pji,pj,pi->p", local, vy, vx).reshape(x.shape)


def build_dg_space(mesh: SpatialMesh, K: int) -> DGSpace:
    if K < 0:
        raise ValueError(f"polynomial degree must be >= 0, got {K}")
    if K == 0:
        log.warning("K=0 DG is not asymptotic preserving in the diffusion limit")
    return DGSpace(mesh, K)


@dataclass
class SweepBlocks:
    """Per-cell s x s blocks of the upwind operators, read by the sweep kernel."""

    dxm_diag: np.ndarray
    dxm_left: np.ndarray
    dxp_diag: np.ndarray
    dxp_right: np.ndarray
    dym_diag: np.ndarray
    dym_down: np.ndarray
    dyp_diag: np.ndarray
    dyp_up: np.ndarray
    sigt: np.ndarray
    left: np.ndarray
    right: np.ndarray
    down: np.ndarray
    up: np.ndarray


@dataclass
class DiscreteOperators:
    space: DGSpace
    dx_minus: sp.csr_matrix
    dx_plus: sp.csr_matrix
    dy_minus: sp.csr_matrix
    dy_plus: sp.csr_matrix
    sigma_s: sp.csr_matrix
    sigma_t: sp.csr_matrix
    sigma_a: sp.csr_matrix
    source: np.ndarray
    # columns: inflow edge integrals on the left, right, bottom, top boundaries
    boundary_edges: np.ndarray
    blocks: SweepBlocks = field(repr=False)

    @property
    def n_dofs(self) -> int:
        return self.source.shape[0]

    def boundary_weights(self, quad: AngularQuadrature, j: int) -> np.ndarray:
        """Coefficients mapping ``boundary_edges`` columns to g_j^bc."""
        ox, oy = quad.mu_x[j], quad.mu_y[j]
        return np.array([max(ox, 0.0), -min(ox, 0.0), max(oy, 0.0), -min(oy, 0.0)])

    def boundary_vector(self, quad: AngularQuadrature, j: int) -> np.ndarray:
        return self.boundary_edges @ self.boundary_weights(quad, j)

    def rhs(self, phi: np.ndarray, quad: AngularQuadrature, j: int) -> np.ndarray:
        """Sigma_s phi + G + g_j^bc."""
        return self.sigma_s @ phi + self.source + self.boundary_vector(quad, j)


def _as_field(f) -> FieldFunction:
    if callable(f):
        return f
    value = float(f)
    return lambda x, y: np.full(np.shape(x), value)


def _upwind_1d(space: DGSpace, h: float):
    """1D per-cell blocks: volume term and the minus/plus face couplings."""
    xi, w = space.line_rule()
    v, d = space.basis_1d(xi, h)
    # S(m, n) = int phi_m' phi_n over the cell
    S = (d * (w * h / 2.0)[:, None]).T @ v
    vol = -S
    tr_right, _ = space.basis_1d(np.array([1.0]), h)
    tr_left, _ = space.basis_1d(np.array([-1.0]), h)
    r = tr_right[0]
    l = tr_left[0]
    minus_diag = vol + np.outer(r, r)
    minus_prev = -np.outer(l, r)  # row: this cell, column: upwind (previous) cell
    plus_diag = vol - np.outer(l, l)
    plus_next = np.outer(r, l)  # row: this cell, column: next cell
    return minus_diag, minus_prev, plus_diag, plus_next


def _shift(n: int, offset: int, mask: np.ndarray) -> sp.csr_matrix:
    """Cell-to-cell coupling ``row c -> column c + offset`` where mask[c]."""
    rows = np.nonzero(mask)[0]
    return sp.csr_matrix((np.ones(rows.size), (rows, rows + offset)), shape=(n, n))


def _mass_blocks(space: DGSpace, sigma: FieldFunction, name: str) -> np.ndarray:
    X, Y = space.quadrature_points()
    values = np.asarray(sigma(X, Y), dtype=float) * np.ones_like(X)
    if np.any(values < 0):
        raise ValueError(f"cross section {name} is negative at a quadrature node")
    _, _, weights, val, _, _ = space.volume_rule()
    return np.einsum("qi,cq,qj->cij", val, values * weights, val)


def _block_diag(blocks: np.ndarray) -> sp.csr_matrix:
    n, s, _ = blocks.shape
    rows = np.repeat(np.arange(n * s).reshape(n, s), s, axis=1).reshape(n, s, s)
    cols = np.tile(np.arange(s), (n, s, 1)) + (np.arange(n) * s)[:, None, None]
    M = sp.csr_matrix((blocks.ravel(), (rows.ravel(), cols.ravel())), shape=(n * s, n * s))
    M.sort_indices()
    return M


def project_source(space: DGSpace, G) -> np.ndarray:
    G = _as_field(G)
    X, Y = space.quadrature_points()
    _, _, weights, val, _, _ = space.volume_rule()
    values = np.asarray(G(X, Y), dtype=float) * np.ones_like(X)
    return ((values * weights) @ val).ravel()


def boundary_edges(space: DGSpace, g) -> np.ndarray:
    """Edge integrals of ``g * eta_k`` on each of the four domain sides.

    Column order is left, right, bottom, top. Combined with the inflow weights
    of :meth:`DiscreteOperators.boundary_weights` these give g_j^bc.
    """
    g = _as_field(g)
    m = space.mesh
    s = space.dofs_per_cell
    xi, w = space.line_rule()
    out = np.zeros((space.n_dofs, 4))

    vx, _ = space.basis_1d(xi, m.dx)
    vy, _ = space.basis_1d(xi, m.dy)
    tx = {LEFT: space.basis_1d(np.array([-1.0]), m.dx)[0][0],
          RIGHT: space.basis_1d(np.array([1.0]), m.dx)[0][0]}
    ty = {BOTTOM: space.basis_1d(np.array([-1.0]), m.dy)[0][0],
          TOP: space.basis_1d(np.array([1.0]), m.dy)[0][0]}

    for side, a, xb in ((LEFT, 0, m.x_min), (RIGHT, m.nx - 1, m.x_max)):
        for b in range(m.ny):
            yq = m.y_min + (b + 0.5) * m.dy + xi * m.dy / 2.0
            gv = np.asarray(g(np.full_like(yq, xb), yq), dtype=float) * np.ones_like(yq)
            edge_y = (gv * w * m.dy / 2.0) @ vy  # int g chi_iy dy
            local = np.outer(edge_y, tx[side]).reshape(s)  # (iy, ix)
            c = m.cell_index(a, b)
            out[c * s:(c + 1) * s, side] = local
    for side, b, yb in ((BOTTOM, 0, m.y_min), (TOP, m.ny - 1, m.y_max)):
        for a in range(m.nx):
            xq = m.x_min + (a + 0.5) * m.dx + xi * m.dx / 2.0
            gv = np.asarray(g(xq, np.full_like(xq, yb)), dtype=float) * np.ones_like(xq)
            edge_x = (gv * w * m.dx / 2.0) @ vx
            local = np.outer(ty[side], edge_x).reshape(s)
            c = m.cell_index(a, b)
            out[c * s:(c + 1) * s, side] = local
    return out


def assemble_operators(space: DGSpace, sigma_s, sigma_a, source=0.0,
                       boundary=0.0) -> DiscreteOperators:
    """Assemble the upwind streaming, cross-section and source operators."""
    m = space.mesh
    K1 = space.K + 1
    I1 = np.eye(K1)
    n = m.n_cells
    sig_s = _mass_blocks(space, _as_field(sigma_s), "sigma_s")
    sig_a = _mass_blocks(space, _as_field(sigma_a), "sigma_a")
    sig_t = sig_s + sig_a

    a_idx = np.arange(n) % m.nx
    b_idx = np.arange(n) // m.nx

    xmd, xmp, xpd, xpn = _upwind_1d(space, m.dx)
    ymd, ymp, ypd, ypn = _upwind_1d(space, m.dy)
    # local index iy * K1 + ix: x blocks act on ix, y blocks on iy
    bx = [np.kron(I1, B) for B in (xmd, xmp, xpd, xpn)]
    by = [np.kron(B, I1) for B in (ymd, ymp, ypd, ypn)]

    eye_c = sp.identity(n, format="csr")
    has_left = a_idx > 0
    has_right = a_idx < m.nx - 1
    has_down = b_idx > 0
    has_up = b_idx < m.ny - 1

    def kron(A, B):
        return sp.kron(A, sp.csr_matrix(B), format="csr")

    dx_minus = (kron(eye_c, bx[0]) + kron(_shift(n, -1, has_left), bx[1])).tocsr()
    dx_plus = (kron(eye_c, bx[2]) + kron(_shift(n, 1, has_right), bx[3])).tocsr()
    dy_minus = (kron(eye_c, by[0]) + kron(_shift(n, -m.nx, has_down), by[1])).tocsr()
    dy_plus = (kron(eye_c, by[2]) + kron(_shift(n, m.nx, has_up), by[3])).tocsr()
    for M in (dx_minus, dx_plus, dy_minus, dy_plus):
        M.sort_indices()

    cells = np.arange(n)
    blocks = SweepBlocks(
        dxm_diag=np.broadcast_to(bx[0], (n,) + bx[0].shape).copy(),
        dxm_left=np.broadcast_to(bx[1], (n,) + bx[1].shape).copy(),
        dxp_diag=np.broadcast_to(bx[2], (n,) + bx[2].shape).copy(),
        dxp_right=np.broadcast_to(bx[3], (n,) + bx[3].shape).copy(),
        dym_diag=np.broadcast_to(by[0], (n,) + by[0].shape).copy(),
        dym_down=np.broadcast_to(by[1], (n,) + by[1].shape).copy(),
        dyp_diag=np.broadcast_to(by[2], (n,) + by[2].shape).copy(),
        dyp_up=np.broadcast_to(by[3], (n,) + by[3].shape).copy(),
        sigt=sig_t,
        left=np.where(has_left, cells - 1, -1),
        right=np.where(has_right, cells + 1, -1),
        down=np.where(has_down, cells - m.nx, -1),
        up=np.where(has_up, cells + m.nx, -1),
    )
    return DiscreteOperators(
        space=space,
        dx_minus=dx_minus,
        dx_plus=dx_plus,
        dy_minus=dy_minus,
        dy_plus=dy_plus,
        sigma_s=_block_diag(sig_s),
        sigma_t=_block_diag(sig_t),
        sigma_a=_block_diag(sig_a),
        source=project_source(space, source),
        boundary_edges=boundary_edges(space, boundary),
        blocks=blocks,
    )


def quadrant_operators(ops: DiscreteOperators, mu_x: float, mu_y: float):
    """The (D_x, D_y) pair selected by the upwind quadrant rule."""
    Dx = ops.dx_minus if mu_x >= 0 else ops.dx_plus
    Dy = ops.dy_minus if mu_y >= 0 else ops.dy_plus
    return Dx, Dy


class UpwindOperator:
    """Lazy view of D_j (+ Sigma_t when ``with_total``) for one direction."""

    def __init__(self, ops: DiscreteOperators, mu_x: float, mu_y: float, with_total=True):
        self.ops = ops
        self.mu_x = float(mu_x)
        self.mu_y = float(mu_y)
        self.with_total = with_total
        self.Dx, self.Dy = quadrant_operators(ops, mu_x, mu_y)
        self.shape = self.Dx.shape

    def __matmul__(self, v):
        out = self.mu_x * (self.Dx @ v) + self.mu_y * (self.Dy @ v)
        if self.with_total:
            out += self.ops.sigma_t @ v
        return out

    def tocsr(self) -> sp.csr_matrix:
        M = self.mu_x * self.Dx + self.mu_y * self.Dy
        if self.with_total:
            M = M + self.ops.sigma_t
        return M.tocsr()


def upwind_combination(ops: DiscreteOperators, quad: AngularQuadrature, j: int,
                       with_total: bool = False) -> UpwindOperator:
    return UpwindOperator(ops, quad.mu_x[j], quad.mu_y[j], with_total=with_total)
