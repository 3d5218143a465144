"""Transport sweeps: exact block Gauss-Seidel solve of (D_j + Sigma_t) psi = b."""

from __future__ import annotations

import numpy as np
from numba import njit

from .dg import DiscreteOperators
from .quadrature import AngularQuadrature


class SingularBlockError(RuntimeError):
    """A cell's diagonal block could not be factorized during a sweep."""


@njit(cache=True)
def _solve_small(A, b, out):
    # Gaussian elimination with partial pivoting; A and b are overwritten.
    n = b.shape[0]
    scale = 0.0
    for i in range(n):
        for k in range(n):
            v = abs(A[i, k])
            if v > scale:
                scale = v
    for k in range(n):
        p = k
        best = abs(A[k, k])
        for i in range(k + 1, n):
            v = abs(A[i, k])
            if v > best:
                best = v
                p = i
        if not best > 1e-14 * scale:
            return False
        if p != k:
            for m in range(n):
                tmp = A[k, m]
                A[k, m] = A[p, m]
                A[p, m] = tmp
            tmp = b[k]
            b[k] = b[p]
            b[p] = tmp
        for i in range(k + 1, n):
            f = A[i, k] / A[k, k]
            for m in range(k + 1, n):
                A[i, m] -= f * A[k, m]
            b[i] -= f * b[k]
    for i in range(n - 1, -1, -1):
        acc = b[i]
        for m in range(i + 1, n):
            acc -= A[i, m] * out[m]
        out[i] = acc / A[i, i]
    return True


@njit(cache=True)
def _sweep_kernel(mux, muy, nx, ny, s,
                  dxm_diag, dxm_left, dxp_diag, dxp_right,
                  dym_diag, dym_down, dyp_diag, dyp_up, sigt,
                  left, right, down, up, rhs, psi):
    A = np.empty((s, s))
    b = np.empty(s)
    x = np.empty(s)
    for bi in range(ny):
        bb = bi if muy >= 0 else ny - 1 - bi
        for ai in range(nx):
            aa = ai if mux >= 0 else nx - 1 - ai
            c = bb * nx + aa
            if mux >= 0:
                Dx = dxm_diag[c]
                Ox = dxm_left[c]
                nbx = left[c]
            else:
                Dx = dxp_diag[c]
                Ox = dxp_right[c]
                nbx = right[c]
            if muy >= 0:
                Dy = dym_diag[c]
                Oy = dym_down[c]
                nby = down[c]
            else:
                Dy = dyp_diag[c]
                Oy = dyp_up[c]
                nby = up[c]
            St = sigt[c]
            for i in range(s):
                acc = rhs[c * s + i]
                if nbx >= 0:
                    for k in range(s):
                        acc -= mux * Ox[i, k] * psi[nbx * s + k]
                if nby >= 0:
                    for k in range(s):
                        acc -= muy * Oy[i, k] * psi[nby * s + k]
                b[i] = acc
                for k in range(s):
                    A[i, k] = mux * Dx[i, k] + muy * Dy[i, k] + St[i, k]
            if not _solve_small(A, b, x):
                return c
            for i in range(s):
                psi[c * s + i] = x[i]
    return -1


def sweep_direction(ops: DiscreteOperators, mu_x: float, mu_y: float,
                    rhs: np.ndarray) -> np.ndarray:
    """Solve (mu_x D_x^{+-} + mu_y D_y^{+-} + Sigma_t) psi = rhs by one sweep."""
    blk = ops.blocks
    m = ops.space.mesh
    rhs = np.ascontiguousarray(rhs, dtype=float)
    psi = np.zeros_like(rhs)
    bad = _sweep_kernel(float(mu_x), float(mu_y), m.nx, m.ny, ops.space.dofs_per_cell,
                        blk.dxm_diag, blk.dxm_left, blk.dxp_diag, blk.dxp_right,
                        blk.dym_diag, blk.dym_down, blk.dyp_diag, blk.dyp_up, blk.sigt,
                        blk.left, blk.right, blk.down, blk.up, rhs, psi)
    if bad >= 0:
        raise SingularBlockError(
            f"singular diagonal block in cell {bad} for direction ({mu_x}, {mu_y})")
    return psi


def sweep(ops: DiscreteOperators, quad: AngularQuadrature, j: int,
          rhs: np.ndarray) -> np.ndarray:
    return sweep_direction(ops, quad.mu_x[j], quad.mu_y[j], rhs)


def sweep_many(ops: DiscreteOperators, quad: AngularQuadrature, angles,
               rhs_core: np.ndarray) -> np.ndarray:
    """Sweep several angles sharing ``rhs_core`` (Sigma_s phi + G); the
    per-angle boundary vector is added here. Columns follow ``angles``."""
    angles = list(angles)
    out = np.empty((rhs_core.shape[0], len(angles)))
    for col, j in enumerate(angles):
        out[:, col] = sweep(ops, quad, j, rhs_core + ops.boundary_vector(quad, j))
    return out


def sweep_order(nx: int, ny: int, mu_x: float, mu_y: float) -> np.ndarray:
    """Cell visitation order used by the kernel for the given quadrant."""
    bs = range(ny) if mu_y >= 0 else range(ny - 1, -1, -1)
    as_ = range(nx) if mu_x >= 0 else range(nx - 1, -1, -1)
    return np.array([b * nx + a for b in bs for a in as_])
