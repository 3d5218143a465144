"""Problem configuration, assembled problem and solver report."""

from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .dg import DGSpace, DiscreteOperators, SpatialMesh, assemble_operators, build_dg_space
from .dsa import BOUNDARY_CONDITIONS, DiffusionSystem, build_diffusion
from .fields import FieldSpecError, make_field
from .quadrature import AngularQuadrature, build_cl_quadrature

MODES = ("full", "lowrank", "both")


class ConfigError(ValueError):
    pass


class MaxIterationsExceeded(RuntimeError):
    def __init__(self, message: str, report: "SolveReport"):
        super().__init__(message)
        self.report = report


# Dotted key prefix for each config field in the text format.
_SECTIONS = {
    "name": "problem", "mode": "problem",
    "x_min": "mesh", "x_max": "mesh", "y_min": "mesh", "y_max": "mesh",
    "nx": "mesh", "ny": "mesh", "K": "mesh",
    "n_theta": "angles", "n_omega_z": "angles",
    "sigma_s": "material", "sigma_a": "material", "source": "material",
    "boundary": "material",
    "tol_outer": "solver", "max_iter": "solver", "use_dsa": "solver",
    "dsa_boundary": "solver",
    "eps_res": "lowrank", "eps_diff": "lowrank", "eps_svd": "lowrank",
    "eps_mgs": "lowrank", "p": "lowrank", "q": "lowrank", "seed": "lowrank",
}


@dataclass
class ProblemConfig:
    name: str = "custom"
    x_min: float = -1.0
    x_max: float = 1.0
    y_min: float = -1.0
    y_max: float = 1.0
    nx: int = 32
    ny: int = 32
    K: int = 1
    n_theta: int = 16
    n_omega_z: int = 8
    sigma_s: str = "const:1"
    sigma_a: str = "const:0"
    source: str = "gaussian:1:100"
    boundary: str = "const:0"
    tol_outer: float = 1e-6
    max_iter: int = 500
    use_dsa: bool = True
    dsa_boundary: str = "dirichlet"
    eps_res: float = 1e-7
    eps_diff: float = 1e-7
    eps_svd: float = 1e-8
    eps_mgs: float = 1e-10
    p: int = 1
    q: int = 8
    seed: int = 0
    mode: str = "both"

    def validate(self) -> "ProblemConfig":
        for tol in ("tol_outer", "eps_res", "eps_diff", "eps_svd", "eps_mgs"):
            if not getattr(self, tol) > 0:
                raise ConfigError(f"{tol} must be positive")
        if self.p < 1 or self.q < self.p:
            raise ConfigError(f"need 1 <= p <= q, got p={self.p}, q={self.q}")
        if self.p > self.n_angles:
            raise ConfigError("p exceeds the number of angles")
        if self.nx < 1 or self.ny < 1 or self.n_theta < 1 or self.n_omega_z < 1:
            raise ConfigError("mesh and quadrature sizes must be positive")
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ConfigError("empty spatial domain")
        if self.K < 0 or self.max_iter < 1:
            raise ConfigError("K must be >= 0 and max_iter >= 1")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if self.dsa_boundary not in BOUNDARY_CONDITIONS:
            raise ConfigError(f"dsa_boundary must be one of {BOUNDARY_CONDITIONS}")
        for spec in (self.sigma_s, self.sigma_a, self.source, self.boundary):
            try:
                make_field(spec)
            except FieldSpecError as exc:
                raise ConfigError(str(exc)) from exc
        return self

    @property
    def n_angles(self) -> int:
        return self.n_theta * self.n_omega_z

    def replace(self, **changes) -> "ProblemConfig":
        return dataclasses.replace(self, **changes)

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if isinstance(value, float):
                value = repr(value)
            lines.append(f"{_SECTIONS[f.name]}.{f.name} = {value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ProblemConfig":
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        values: dict[str, Any] = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            key = key.rsplit(".", 1)[-1]
            if key not in types:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            values[key] = _coerce(types[key], value, lineno)
        return cls(**values).validate()


def _coerce(kind: str, value: str, lineno: int):
    try:
        if kind == "bool":
            if value.lower() not in ("true", "false", "1", "0"):
                raise ValueError(value)
            return value.lower() in ("true", "1")
        if kind == "int":
            return int(value)
        if kind == "float":
            return float(value)
    except ValueError as exc:
        raise ConfigError(f"line {lineno}: cannot parse {value!r} as {kind}") from exc
    return value


@dataclass
class Problem:
    """Assembled discretization shared by both drivers."""

    config: ProblemConfig
    space: DGSpace
    quad: AngularQuadrature
    ops: DiscreteOperators
    diffusion: DiffusionSystem | None
    assembly_time: float = 0.0


def build_problem(config: ProblemConfig) -> Problem:
    config.validate()
    t0 = time.perf_counter()
    mesh = SpatialMesh(config.x_min, config.x_max, config.y_min, config.y_max,
                       config.nx, config.ny)
    space = build_dg_space(mesh, config.K)
    quad = build_cl_quadrature(config.n_theta, config.n_omega_z)
    ops = assemble_operators(space, make_field(config.sigma_s), make_field(config.sigma_a),
                             make_field(config.source), make_field(config.boundary))
    diffusion = (build_diffusion(space, ops, boundary=config.dsa_boundary)
                 if config.use_dsa else None)
    return Problem(config, space, quad, ops, diffusion, time.perf_counter() - t0)


@dataclass
class SolveReport:
    method: str
    phi: np.ndarray
    iterations: int
    converged: bool
    wall_time: float
    dofs: int
    diff_2: list[float] = field(default_factory=list)
    diff_inf: list[float] = field(default_factory=list)
    # full rank: the final angular flux matrix when stored
    psi: np.ndarray | None = None
    # low rank extras, one entry per outer iteration
    ranks: list[int] = field(default_factory=list)
    basis_ranks: list[int] = field(default_factory=list)
    oversampling: list[float] = field(default_factory=list)
    sampled: list[list[int]] = field(default_factory=list)
    inner_stats: list[Any] = field(default_factory=list)
    factors: Any = None

    @property
    def rank(self) -> int | None:
        return self.ranks[-1] if self.ranks else None
