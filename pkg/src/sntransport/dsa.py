"""Diffusion synthetic acceleration with a symmetric interior-penalty DG
discretization of -div(D grad u) + sigma_a u, D = 1 / (3 sigma_t).

Face fluxes use diffusion-weighted averages so that coefficient jumps of
several orders of magnitude stay coercive.

The diffusion coefficient is taken cell-wise constant (cell average of sigma_t).
Boundary: weakly imposed homogeneous Dirichlet (default) or the Marshak-type
vacuum condition ``D du/dn + u / 2 = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .dg import DGSpace, DiscreteOperators


class NotPositiveDefiniteError(RuntimeError):
    pass


def _face_traces(space: DGSpace, axis: int):
    """Face-quadrature traces for faces normal to ``axis`` (0: x, 1: y).

    Returns (weights, v_lo, d_lo, v_hi, d_hi): values and normal derivatives of
    the local basis of the cell below/left of the face (its upper trace) and of
    the cell above/right (its lower trace), each of shape (nq, s).
    """
    m = space.mesh
    xi, w = space.line_rule()
    h_n, h_t = (m.dx, m.dy) if axis == 0 else (m.dy, m.dx)
    vt, _ = space.basis_1d(xi, h_t)  # tangential factor at face points
    vhi, dhi = space.basis_1d(np.array([1.0]), h_n)
    vlo, dlo = space.basis_1d(np.array([-1.0]), h_n)

    def tensor(normal_vals, tang):
        # local index iy * (K+1) + ix
        if axis == 0:
            return np.einsum("qj,i->qji", tang, normal_vals).reshape(xi.size, -1)
        return np.einsum("j,qi->qji", normal_vals, tang).reshape(xi.size, -1)

    weights = w * h_t / 2.0
    # lower/left cell sees the face at its +1 end, upper/right cell at its -1 end
    return (weights, tensor(vhi[0], vt), tensor(dhi[0], vt),
            tensor(vlo[0], vt), tensor(dlo[0], vt))


def _coo_blocks(rows_cells, cols_cells, blocks, s):
    n, _, _ = blocks.shape
    li = np.arange(s)
    r = (rows_cells[:, None, None] * s + li[None, :, None]) * np.ones((1, 1, s), dtype=int)
    c = (cols_cells[:, None, None] * s + li[None, None, :]) * np.ones((1, s, 1), dtype=int)
    return r.ravel(), c.ravel(), blocks.ravel()


BOUNDARY_CONDITIONS = ("dirichlet", "marshak")


def sip_matrix(space: DGSpace, D_cell: np.ndarray, penalty_factor: float | None = None,
               boundary: str = "dirichlet"):
    """SIP stiffness for cell-wise constant diffusion coefficients ``D_cell``."""
    if boundary not in BOUNDARY_CONDITIONS:
        raise ValueError(f"unknown DSA boundary condition {boundary!r}")
    m = space.mesh
    K = space.K
    s = space.dofs_per_cell
    n = m.n_cells
    C = 4.0 * K * (K + 1) if penalty_factor is None else penalty_factor
    if C <= 0:
        C = 4.0  # K = 0 still needs a positive penalty

    _, _, wq, _, ddx, ddy = space.volume_rule()
    kvol = np.einsum("qi,q,qj->ij", ddx, wq, ddx) + np.einsum("qi,q,qj->ij", ddy, wq, ddy)
    rows, cols, vals = [], [], []

    def add(rc, cc, blocks):
        r, c, v = _coo_blocks(rc, cc, blocks, s)
        rows.append(r)
        cols.append(c)
        vals.append(v)

    cells = np.arange(n)
    add(cells, cells, D_cell[:, None, None] * kvol[None])

    a_idx = cells % m.nx
    b_idx = cells // m.nx
    for axis in (0, 1):
        w, v_lo, d_lo, v_hi, d_hi = _face_traces(space, axis)
        h = m.dx if axis == 0 else m.dy
        # interior faces: "L" is the lower/left cell, normal points from L to R
        if axis == 0:
            L = cells[a_idx < m.nx - 1]
            R = L + 1
        else:
            L = cells[b_idx < m.ny - 1]
            R = L + m.nx
        vL, dL, vR, dR = v_lo, d_lo, v_hi, d_hi
        J = np.hstack([vL, -vR])
        zero = np.zeros_like(dL)
        FL = np.hstack([dL, zero])
        FR = np.hstack([zero, dR])
        JWJ = J.T @ (w[:, None] * J)
        JWFL = J.T @ (w[:, None] * FL)
        JWFR = J.T @ (w[:, None] * FR)
        DL, DR = D_cell[L], D_cell[R]
        Dh = 2.0 * DL * DR / (DL + DR)
        kappa = C * Dh / h
        # diffusion-weighted average: w_L D_L = w_R D_R = Dh / 2, which keeps
        # the harmonic-mean penalty coercive across large jumps
        Mf = (-0.5 * Dh[:, None, None] * (JWFL + JWFL.T + JWFR + JWFR.T)[None]
              + kappa[:, None, None] * JWJ[None])
        add(L, L, Mf[:, :s, :s])
        add(L, R, Mf[:, :s, s:])
        add(R, L, Mf[:, s:, :s])
        add(R, R, Mf[:, s:, s:])

        # boundary faces, outward normal: the low side sees -d at its low end
        for at_low in (True, False):
            if axis == 0:
                B = cells[a_idx == (0 if at_low else m.nx - 1)]
            else:
                B = cells[b_idx == (0 if at_low else m.ny - 1)]
            v, dn = (vR, -dR) if at_low else (vL, dL)
            JW = v.T @ (w[:, None] * v)
            JF = v.T @ (w[:, None] * dn)
            if boundary == "marshak":
                add(B, B, np.broadcast_to(0.5 * JW, (B.size,) + JW.shape))
                continue
            Db = D_cell[B]
            kb = C * Db / h
            Mb = -Db[:, None, None] * (JF + JF.T)[None] + kb[:, None, None] * JW[None]
            add(B, B, Mb)

    A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n * s, n * s))
    A.sum_duplicates()
    A.sort_indices()
    return A


@dataclass
class DiffusionSystem:
    matrix: sp.csr_matrix
    sigma_s: sp.csr_matrix
    lu: object

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return self.lu.solve(rhs)


def cell_sigma_t(ops: DiscreteOperators) -> np.ndarray:
    """Cell averages of sigma_t (the constant-mode entry of each block)."""
    return ops.blocks.sigt[:, 0, 0].copy()


def build_diffusion(space: DGSpace, ops: DiscreteOperators,
                    penalty_factor: float | None = None,
                    boundary: str = "dirichlet") -> DiffusionSystem:
    sig_t = cell_sigma_t(ops)
    if np.any(sig_t <= 0):
        raise NotPositiveDefiniteError("DSA needs sigma_t > 0 in every cell")
    D_cell = 1.0 / (3.0 * sig_t)
    A = (sip_matrix(space, D_cell, penalty_factor, boundary) + ops.sigma_a).tocsc()
    lu = spla.splu(A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                   options=dict(SymmetricMode=True))
    # symmetric ordering without pivoting: U has a positive diagonal iff A is SPD
    if not np.all(lu.U.diagonal() > 0):
        raise NotPositiveDefiniteError("diffusion matrix is not positive definite")
    return DiffusionSystem(A.tocsr(), ops.sigma_s, lu)


def dsa_correct(sys: DiffusionSystem, phi_star: np.ndarray, phi_prev: np.ndarray) -> np.ndarray:
    """delta phi solving A_diff delta = Sigma_s (phi_star - phi_prev)."""
    rhs = sys.sigma_s @ (phi_star - phi_prev)
    if not np.any(rhs):
        return np.zeros_like(rhs)
    return sys.solve(rhs)
