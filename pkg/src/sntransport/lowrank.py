"""Rank-adaptive low-rank source iteration.

The inner loop grows an orthonormal spatial basis X from sweep snapshots of a
few sampled angles per iteration, keeps X^T A X for the streaming and total
cross-section operators up to date incrementally, and picks the next angles
greedily by Galerkin residual among a small random candidate set. Only after
the inner loop converges is the coefficient matrix C compressed by one
truncated SVD.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .dg import DiscreteOperators
from .dsa import dsa_correct
from .problem import MaxIterationsExceeded, Problem, ProblemConfig, SolveReport, build_problem
from .quadrature import AngularQuadrature
from .sweep import sweep_many

log = logging.getLogger(__name__)

# relative size below which an orthogonalized snapshot counts as dependent
DROP_TOL = 1e-12
OPERATORS = ("dx_minus", "dx_plus", "dy_minus", "dy_plus", "sigma_t")


class SingularReducedSystemError(RuntimeError):
    pass


@dataclass
class LowRankParams:
    p: int = 1
    q: int = 8
    eps_res: float = 1e-7
    eps_diff: float = 1e-7
    eps_svd: float = 1e-8
    eps_mgs: float = 1e-10

    @classmethod
    def from_config(cls, cfg: ProblemConfig) -> "LowRankParams":
        return cls(cfg.p, cfg.q, cfg.eps_res, cfg.eps_diff, cfg.eps_svd, cfg.eps_mgs)


@dataclass
class LowRankFactors:
    X: np.ndarray
    S: np.ndarray
    V: np.ndarray

    @property
    def rank(self) -> int:
        return self.S.shape[0]

    def column_block(self, start: int, stop: int) -> np.ndarray:
        """Columns ``start:stop`` of X S V^T."""
        return (self.X * np.diag(self.S)) @ self.V[start:stop].T


class _Transposes:
    """CSR transposes of the streaming operators, built once per problem."""

    def __init__(self, ops: DiscreteOperators):
        self.ops = ops
        self.T = {name: getattr(ops, name).T.tocsr() for name in OPERATORS[:-1]}
        self.T["sigma_t"] = ops.sigma_t

    def __getitem__(self, name):
        return self.T[name]


@dataclass
class LowRankState:
    """Working state of one inner loop.

    ``R`` holds, column by column in sampling order, the coefficients of every
    sampled snapshot in the current basis, so that X @ R reproduces them.
    """

    n_dofs: int
    rhs_core: np.ndarray
    phi_old: np.ndarray
    rng: np.random.Generator
    n_angles: int
    pending: list[int]
    twins: np.ndarray | None = None
    sampled: list[int] = field(default_factory=list)
    r: int = 0
    _Xt: np.ndarray = None
    _R: np.ndarray = None
    _proj: dict = field(default_factory=dict)
    proj_rhs: np.ndarray = None
    proj_bc: np.ndarray = None
    reorthogonalizations: int = 0

    def __post_init__(self):
        if self.twins is None:
            self.twins = np.arange(self.n_angles)
        cap = 16
        self._Xt = np.zeros((cap, self.n_dofs))
        self._R = np.zeros((cap, cap))
        self._proj = {name: np.zeros((cap, cap)) for name in OPERATORS}
        self.proj_rhs = np.zeros(cap)
        self.proj_bc = np.zeros((cap, 4))

    # -- storage ---------------------------------------------------------

    @property
    def X(self) -> np.ndarray:
        return self._Xt[: self.r].T

    @property
    def R(self) -> np.ndarray:
        return self._R[: self.r, : len(self.sampled)]

    def proj(self, name: str) -> np.ndarray:
        return self._proj[name][: self.r, : self.r]

    def _reserve(self, rank: int, cols: int):
        cap = self._Xt.shape[0]
        if rank > cap:
            new = max(rank, 2 * cap)
            Xt = np.zeros((new, self.n_dofs))
            Xt[:cap] = self._Xt
            self._Xt = Xt
            for name, M in self._proj.items():
                grown = np.zeros((new, new))
                grown[:cap, :cap] = M
                self._proj[name] = grown
            self.proj_rhs = np.concatenate([self.proj_rhs, np.zeros(new - cap)])
            self.proj_bc = np.vstack([self.proj_bc, np.zeros((new - cap, 4))])
        rows, ccap = self._R.shape
        if rank > rows or cols > ccap:
            grown = np.zeros((max(rank, 2 * rows if rank > rows else rows),
                              max(cols, 2 * ccap if cols > ccap else ccap)))
            grown[:rows, :ccap] = self._R
            self._R = grown

    @property
    def unsampled(self) -> np.ndarray:
        """Representative angles (one per twin pair) not yet swept or queued."""
        mask = np.arange(self.n_angles) <= self.twins
        for js in (self.sampled, self.pending):
            mask[js] = False
            mask[self.twins[js]] = False
        return np.flatnonzero(mask)

    def orthogonality_error(self) -> float:
        X = self.X
        return float(np.linalg.norm(X.T @ X - np.eye(self.r)))


def init_inner_loop(rng: np.random.Generator, p: int, n_angles: int, phi_prev: np.ndarray,
                    ops: DiscreteOperators, twins: np.ndarray | None = None) -> LowRankState:
    """Empty basis with ``p`` distinct random angles queued for sweeping.

    With ``twins`` given, only one angle of each twin pair is ever swept; the
    other reuses its column.
    """
    twins = np.arange(n_angles) if twins is None else np.asarray(twins)
    pool = np.flatnonzero(np.arange(n_angles) <= twins)
    if not 1 <= p <= pool.size:
        raise ValueError(f"need 1 <= p <= {pool.size} distinct directions, got p={p}")
    first = rng.choice(pool, size=p, replace=False)
    rhs_core = ops.sigma_s @ phi_prev + ops.source
    return LowRankState(ops.n_dofs, rhs_core, phi_prev.copy(), rng, n_angles,
                        [int(j) for j in first], twins)


def mgs_ro_update(state: LowRankState, snapshots: np.ndarray, angles, eps_mgs: float,
                  reproject_twice: bool = True) -> bool:
    """Append snapshots (columns) to the basis by Gram-Schmidt with selective
    reorthogonalization. Returns True when a full QR replaced the basis.

    ``reproject_twice`` runs the projection step twice per snapshot, which keeps
    the basis orthonormal to round-off so the full QR fallback stays rare.
    """
    snapshots = np.asarray(snapshots, dtype=float).reshape(state.n_dofs, -1)
    angles = list(angles)
    r_old, m_old = state.r, len(state.sampled)
    R_old = state.R.copy()
    state._reserve(r_old + snapshots.shape[1], m_old + snapshots.shape[1])

    for col, j in enumerate(angles):
        psi = snapshots[:, col]
        X = state.X
        c_hat = X.T @ psi
        resid = psi - X @ c_hat
        if reproject_twice and state.r:
            # second pass: one sweep of cancellation leaves O(kappa eps) overlap
            c2 = X.T @ resid
            resid -= X @ c2
            c_hat += c2
        nrm = np.linalg.norm(resid)
        m = len(state.sampled)
        state._R[: state.r, m] = c_hat
        if nrm > DROP_TOL * np.linalg.norm(psi):
            state._Xt[state.r] = resid / nrm
            state._R[state.r, m] = nrm
            state.r += 1
        state.sampled.append(j)

    if state.r >= 2 and abs(state._Xt[0] @ state._Xt[state.r - 1]) > eps_mgs:
        _full_qr(state, r_old, m_old, R_old, snapshots)
        state.reorthogonalizations += 1
        return True
    return False


def _full_qr(state: LowRankState, r_old: int, m_old: int, R_old: np.ndarray,
             snapshots: np.ndarray):
    X_old = state._Xt[:r_old].T
    Q, Rq = np.linalg.qr(np.hstack([X_old, snapshots]))
    keep = list(range(r_old))
    for i in range(snapshots.shape[1]):
        if abs(Rq[r_old + i, r_old + i]) > DROP_TOL * np.linalg.norm(snapshots[:, i]):
            keep.append(r_old + i)
    Q, Rq = Q[:, keep], Rq[keep]
    r_new = len(keep)
    m_new = m_old + snapshots.shape[1]
    R_new = np.zeros((r_new, m_new))
    R_new[:, :m_old] = Rq[:, :r_old] @ R_old
    R_new[:, m_old:] = Rq[:, r_old:]
    state.r = r_new
    state._Xt[:r_new] = Q.T
    state._Xt[r_new:] = 0.0
    state._R[:] = 0.0
    state._R[:r_new, :m_new] = R_new


def incremental_project(state: LowRankState, ops: DiscreteOperators, r_old: int,
                        transposes: _Transposes | None = None):
    """Border the projected operators with the columns added after ``r_old``."""
    transposes = transposes or _Transposes(ops)
    r = state.r
    if r == r_old:
        return
    Xt_old = state._Xt[:r_old]
    P = np.ascontiguousarray(state._Xt[r_old:r].T)
    k = r - r_old
    # stack A P and A^T P for all operators so X_old is read only twice
    AP = np.hstack([getattr(ops, name) @ P for name in OPERATORS])
    AtP = np.hstack([transposes[name] @ P for name in OPERATORS])
    top = Xt_old @ AP
    left = Xt_old @ AtP
    corner = P.T @ AP
    for i, name in enumerate(OPERATORS):
        cols = slice(i * k, (i + 1) * k)
        M = state._proj[name]
        M[:r_old, r_old:r] = top[:, cols]
        M[r_old:r, :r_old] = left[:, cols].T
        M[r_old:r, r_old:r] = corner[:, cols]
    state.proj_rhs[r_old:r] = P.T @ state.rhs_core
    state.proj_bc[r_old:r] = P.T @ ops.boundary_edges


def reproject(state: LowRankState, ops: DiscreteOperators):
    """Direct projection of every operator onto the current basis."""
    X = state.X
    r = state.r
    for name in OPERATORS:
        state._proj[name][:] = 0.0
        state._proj[name][:r, :r] = X.T @ (getattr(ops, name) @ X)
    state.proj_rhs[:] = 0.0
    state.proj_rhs[:r] = X.T @ state.rhs_core
    state.proj_bc[:] = 0.0
    state.proj_bc[:r] = X.T @ ops.boundary_edges


def reduced_matrix(state: LowRankState, mu_x: float, mu_y: float) -> np.ndarray:
    """X^T (D_j + Sigma_t) X from the projected pieces (quadrant rule)."""
    Dx = state.proj("dx_minus" if mu_x >= 0 else "dx_plus")
    Dy = state.proj("dy_minus" if mu_y >= 0 else "dy_plus")
    return mu_x * Dx + mu_y * Dy + state.proj("sigma_t")


def reduced_rhs(state: LowRankState, ops: DiscreteOperators, quad: AngularQuadrature,
                j: int) -> np.ndarray:
    return state.proj_rhs[: state.r] + state.proj_bc[: state.r] @ ops.boundary_weights(quad, j)


def galerkin_solve(state: LowRankState, ops: DiscreteOperators, quad: AngularQuadrature,
                   j: int) -> np.ndarray:
    if state.r == 0:
        return np.zeros(0)
    A = reduced_matrix(state, quad.mu_x[j], quad.mu_y[j])
    try:
        lu, piv = sla.lu_factor(A, check_finite=False)
    except sla.LinAlgError as exc:
        raise SingularReducedSystemError(f"reduced system for angle {j} is singular") from exc
    if np.any(np.diag(lu) == 0):
        raise SingularReducedSystemError(f"reduced system for angle {j} is singular")
    return sla.lu_solve((lu, piv), reduced_rhs(state, ops, quad, j), check_finite=False)


def galerkin_residual(state: LowRankState, ops: DiscreteOperators, quad: AngularQuadrature,
                      j: int, c: np.ndarray, v: np.ndarray | None = None) -> np.ndarray:
    """Sigma_s phi_prev + G~_j - (D_j + Sigma_t) X c; pass ``v = X c`` if known."""
    if v is None:
        v = state.X @ c if state.r else np.zeros(state.n_dofs)
    mu_x, mu_y = quad.mu_x[j], quad.mu_y[j]
    Dx = ops.dx_minus if mu_x >= 0 else ops.dx_plus
    Dy = ops.dy_minus if mu_y >= 0 else ops.dy_plus
    Av = mu_x * (Dx @ v) + mu_y * (Dy @ v) + ops.sigma_t @ v
    return state.rhs_core + ops.boundary_vector(quad, j) - Av


def greedy_subsample(state: LowRankState, ops: DiscreteOperators, quad: AngularQuadrature,
                     p: int, q: int):
    """Pick the ``p`` largest-residual angles among ``q`` random unsampled ones.

    Returns ``(selected, max_residual, coeffs)`` where ``coeffs`` maps each
    candidate angle to its reduced solution.
    """
    pool = state.unsampled
    if pool.size == 0:
        return [], 0.0, {}
    candidates = [int(j) for j in state.rng.choice(pool, size=min(q, pool.size), replace=False)]
    coeffs = {j: galerkin_solve(state, ops, quad, j) for j in candidates}
    if state.r:
        V = state.X @ np.column_stack([coeffs[j] for j in candidates])
    else:
        V = np.zeros((state.n_dofs, len(candidates)))
    norms = np.array([np.linalg.norm(galerkin_residual(state, ops, quad, j, coeffs[j], V[:, i]))
                      for i, j in enumerate(candidates)])
    order = np.argsort(-norms, kind="stable")
    selected = [candidates[i] for i in order[:p]]
    return selected, float(norms.max()), coeffs


@dataclass
class StopDecision:
    converged: bool
    phi: np.ndarray | None = None
    C: np.ndarray | None = None
    evaluated: bool = False
    diff: float | None = None


def coefficient_matrix(state: LowRankState, ops: DiscreteOperators, quad: AngularQuadrature,
                       known: dict | None = None) -> np.ndarray:
    """C (r x N_omega): sampled columns from R, the rest by Galerkin solves."""
    known = known or {}
    tw = state.twins
    C = np.empty((state.r, quad.n_angles))
    C[:, state.sampled] = state.R
    C[:, tw[state.sampled]] = state.R
    for j in [*state.unsampled, *state.pending]:
        j = int(j)
        C[:, j] = known[j] if j in known else galerkin_solve(state, ops, quad, j)
        C[:, tw[j]] = C[:, j]
    return C


def check_stopping(state: LowRankState, ops: DiscreteOperators, quad: AngularQuadrature,
                   max_residual: float, eps_res: float, eps_diff: float,
                   known: dict | None = None) -> StopDecision:
    if not max_residual < eps_res:
        return StopDecision(False)
    C = coefficient_matrix(state, ops, quad, known)
    phi = state.X @ (C @ quad.weights) if state.r else np.zeros(state.n_dofs)
    diff = float(np.linalg.norm(phi - state.phi_old))
    if diff <= eps_diff:
        return StopDecision(True, phi, C, True, diff)
    state.phi_old = phi
    return StopDecision(False, phi, None, True, diff)


def truncation_rank(s: np.ndarray, eps_svd: float) -> int:
    """Smallest rank whose discarded singular-value mass is <= eps_svd of the total."""
    total = s.sum()
    if total == 0:
        return 0
    # tail[l] = sum_{i >= l} s_i, i.e. the mass discarded when keeping l values
    tail = np.concatenate([np.cumsum(s[::-1])[::-1], [0.0]])
    return int(np.flatnonzero(tail / total <= eps_svd)[0])


def truncate(C: np.ndarray, X: np.ndarray, eps_svd: float) -> LowRankFactors:
    U, s, Vt = np.linalg.svd(C, full_matrices=False)
    r = truncation_rank(s, eps_svd)
    return LowRankFactors(X @ U[:, :r], np.diag(s[:r]), Vt[:r].T.copy())


@dataclass
class InnerStats:
    basis_ranks: list[int] = field(default_factory=list)
    max_residuals: list[float] = field(default_factory=list)
    reorthogonalized: list[bool] = field(default_factory=list)
    phi_diffs: list[float | None] = field(default_factory=list)
    sampled: list[int] = field(default_factory=list)
    exhausted: bool = False
    final_rank: int = 0
    time: float = 0.0

    @property
    def iterations(self) -> int:
        return len(self.basis_ranks)

    @property
    def oversampling(self) -> float:
        r = self.final_rank
        return (self.basis_ranks[-1] - r) / r if r else 0.0


@dataclass
class InnerResult:
    phi: np.ndarray
    X: np.ndarray
    C: np.ndarray
    stats: InnerStats


def low_rank_si(ops: DiscreteOperators, quad: AngularQuadrature, phi_prev: np.ndarray,
                params: LowRankParams, rng: np.random.Generator,
                transposes: _Transposes | None = None, max_inner: int | None = None,
                fold_twins: bool = True) -> InnerResult:
    """Low-rank approximation of one SI step; returns phi^(n,*) with X and C."""
    t0 = time.perf_counter()
    transposes = transposes or _Transposes(ops)
    state = init_inner_loop(rng, params.p, quad.n_angles, phi_prev, ops,
                            quad.twins if fold_twins else None)
    stats = InnerStats()
    max_inner = max_inner or quad.n_angles + 1
    for _ in range(max_inner):
        angles = state.pending
        snaps = sweep_many(ops, quad, angles, state.rhs_core)
        state.pending = []
        r_old = state.r
        reorth = mgs_ro_update(state, snaps, angles, params.eps_mgs)
        if reorth:
            reproject(state, ops)
        else:
            incremental_project(state, ops, r_old, transposes)
        stats.sampled.extend(angles)
        stats.basis_ranks.append(state.r)
        stats.reorthogonalized.append(reorth)

        if state.unsampled.size == 0:
            # every angle swept: X C reproduces the full-rank SI step
            C = coefficient_matrix(state, ops, quad)
            phi = state.X @ (C @ quad.weights)
            stats.max_residuals.append(0.0)
            stats.phi_diffs.append(float(np.linalg.norm(phi - state.phi_old)))
            stats.exhausted = True
            break

        selected, max_res, coeffs = greedy_subsample(state, ops, quad, params.p, params.q)
        stats.max_residuals.append(max_res)
        decision = check_stopping(state, ops, quad, max_res, params.eps_res,
                                  params.eps_diff, coeffs)
        stats.phi_diffs.append(decision.diff)
        if decision.converged:
            phi, C = decision.phi, decision.C
            break
        state.pending = selected
    else:
        raise RuntimeError("inner loop exceeded its iteration bound")
    s = np.linalg.svd(C, compute_uv=False) if C.size else np.zeros(0)
    stats.final_rank = truncation_rank(s, params.eps_svd)
    stats.time = time.perf_counter() - t0
    return InnerResult(phi, state.X.copy(), C, stats)


def solve_low_rank(problem: Problem, build_factors: str = "final") -> SolveReport:
    """Outer low-rank SI-DSA loop.

    ``build_factors``: "final" (default) truncates only the last inner result,
    "never" skips the factors entirely.
    """
    cfg = problem.config
    ops, quad = problem.ops, problem.quad
    params = LowRankParams.from_config(cfg)
    rng = np.random.default_rng(cfg.seed)
    transposes = _Transposes(ops)
    phi = np.zeros(ops.n_dofs)
    report = SolveReport("lowrank", phi, 0, False, 0.0, 0)
    t0 = time.perf_counter()
    inner = None
    for n in range(1, cfg.max_iter + 1):
        inner = low_rank_si(ops, quad, phi, params, rng, transposes)
        phi_star = inner.phi
        delta = phi_star - phi
        report.diff_2.append(float(np.linalg.norm(delta)))
        report.diff_inf.append(float(np.abs(delta).max()))
        st = inner.stats
        report.ranks.append(st.final_rank)
        report.basis_ranks.append(st.basis_ranks[-1])
        report.oversampling.append(st.oversampling)
        report.sampled.append(list(st.sampled))
        report.inner_stats.append(st)
        report.iterations = n
        report.phi = phi_star
        log.debug("LR iteration %d: |dphi|_inf = %.3e, rank %d (basis %d, %d inner)",
                  n, report.diff_inf[-1], st.final_rank, st.basis_ranks[-1], st.iterations)
        if report.diff_inf[-1] <= cfg.tol_outer:
            report.converged = True
            break
        if problem.diffusion is not None:
            phi = phi_star + dsa_correct(problem.diffusion, phi_star, phi)
        else:
            phi = phi_star
    if report.converged and build_factors == "final":
        report.factors = truncate(inner.C, inner.X, params.eps_svd)
    report.wall_time = time.perf_counter() - t0
    report.dofs = report.ranks[-1] * (ops.n_dofs + quad.n_angles)
    if not report.converged:
        raise MaxIterationsExceeded(
            f"low-rank SI-DSA did not converge in {cfg.max_iter} iterations", report)
    return report


def run_low_rank(config: ProblemConfig) -> SolveReport:
    return solve_low_rank(build_problem(config))
