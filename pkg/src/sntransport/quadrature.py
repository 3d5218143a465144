"""Chebyshev-Legendre product quadrature on the unit sphere."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class AngularQuadrature:
    """Directions (N_omega x 3) and normalized weights (sum to one)."""

    directions: np.ndarray
    weights: np.ndarray
    n_theta: int
    n_omega_z: int

    @property
    def n_angles(self) -> int:
        return self.weights.shape[0]

    @property
    def mu_x(self) -> np.ndarray:
        return self.directions[:, 0]

    @property
    def mu_y(self) -> np.ndarray:
        return self.directions[:, 1]

    @property
    def twins(self) -> np.ndarray:
        """Index of the Omega_z-mirrored direction of each angle.

        Twins share (mu_x, mu_y), so in x-y geometry they carry the same
        angular flux. The middle polar node of an odd rule is its own twin.
        """
        j = np.arange(self.n_angles)
        j1, j2 = divmod(j, self.n_omega_z)
        return j1 * self.n_omega_z + (self.n_omega_z - 1 - j2)

    def integrate(self, values: np.ndarray) -> np.ndarray:
        """Weighted sum over the last axis (angles)."""
        return values @ self.weights


def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    """n-point Gauss-Legendre rule on [-1, 1] with weights summing to 2."""
    return np.polynomial.legendre.leggauss(n)


def build_cl_quadrature(n_theta: int, n_omega_z: int) -> AngularQuadrature:
    """Build CL(n_theta, n_omega_z).

    Index ordering is theta-major: ``j = j1 * n_omega_z + j2`` (zero based).
    """
    if n_theta < 1 or n_omega_z < 1:
        raise ValueError(f"quadrature orders must be >= 1, got ({n_theta}, {n_omega_z})")

    j1 = np.arange(1, n_theta + 1)
    theta = 2.0 * j1 * np.pi / n_theta - np.pi / n_theta
    w_theta = np.full(n_theta, 1.0 / n_theta)

    mu_z, w_z = gauss_legendre(n_omega_z)
    w_z = w_z / w_z.sum()

    th, mz = np.meshgrid(theta, mu_z, indexing="ij")
    sin_polar = np.sqrt(1.0 - mz**2)
    directions = np.stack(
        [np.cos(th) * sin_polar, np.sin(th) * sin_polar, mz], axis=-1
    ).reshape(-1, 3)
    weights = np.outer(w_theta, w_z).ravel()

    # cos/sin of the half-offset nodes leave ~1e-17 residue where the exact value is 0
    directions[np.abs(directions) < 1e-15] = 0.0
    directions.setflags(write=False)
    weights.setflags(write=False)
    return AngularQuadrature(directions, weights, n_theta, n_omega_z)
