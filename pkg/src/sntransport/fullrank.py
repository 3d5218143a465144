"""Full-rank source iteration with diffusion synthetic acceleration."""

from __future__ import annotations

import logging
import time

import numpy as np

from .dsa import dsa_correct
from .dg import DiscreteOperators
from .problem import MaxIterationsExceeded, Problem, ProblemConfig, SolveReport, build_problem
from .quadrature import AngularQuadrature
from .sweep import sweep

log = logging.getLogger(__name__)


def si_step(ops: DiscreteOperators, quad: AngularQuadrature, phi_prev: np.ndarray,
            store_psi: bool = True):
    """One SI step: sweep every angle against Sigma_s phi_prev + G.

    Returns ``(Psi, phi_star)``; ``Psi`` is None when ``store_psi`` is False and
    the scalar flux is accumulated angle by angle instead.
    """
    core = ops.sigma_s @ phi_prev + ops.source
    n = ops.n_dofs
    if store_psi:
        Psi = np.empty((n, quad.n_angles))
        for j in range(quad.n_angles):
            Psi[:, j] = sweep(ops, quad, j, core + ops.boundary_vector(quad, j))
        return Psi, Psi @ quad.weights
    phi = np.zeros(n)
    for j in range(quad.n_angles):
        phi += quad.weights[j] * sweep(ops, quad, j, core + ops.boundary_vector(quad, j))
    return None, phi


def solve_full_rank(problem: Problem, store_psi: bool = True) -> SolveReport:
    cfg = problem.config
    ops, quad = problem.ops, problem.quad
    phi = np.zeros(ops.n_dofs)
    report = SolveReport("full", phi, 0, False, 0.0, ops.n_dofs * quad.n_angles)
    t0 = time.perf_counter()
    for n in range(1, cfg.max_iter + 1):
        Psi, phi_star = si_step(ops, quad, phi, store_psi)
        delta = phi_star - phi
        report.diff_2.append(float(np.linalg.norm(delta)))
        report.diff_inf.append(float(np.abs(delta).max()))
        report.iterations = n
        report.phi = phi_star
        report.psi = Psi
        log.debug("FR iteration %d: |dphi|_inf = %.3e", n, report.diff_inf[-1])
        if report.diff_inf[-1] <= cfg.tol_outer:
            report.converged = True
            break
        if problem.diffusion is not None:
            phi = phi_star + dsa_correct(problem.diffusion, phi_star, phi)
        else:
            phi = phi_star
    report.wall_time = time.perf_counter() - t0
    if not report.converged:
        raise MaxIterationsExceeded(
            f"full-rank SI did not converge in {cfg.max_iter} iterations", report)
    return report


def run_full_rank(config: ProblemConfig, store_psi: bool = True) -> SolveReport:
    return solve_full_rank(build_problem(config), store_psi)
