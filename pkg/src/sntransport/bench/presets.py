"""Benchmark problem presets.

Desk-scale variants (40 x 40 cells, CL(16, 8)) are the default for the
pin-cell, lattice and variable-scattering problems; ``full=True`` selects the
published resolutions.
"""

from __future__ import annotations

from ..problem import ConfigError, ProblemConfig

GAUSSIAN = "gaussian:1:100"
PRESETS = ("homogeneous", "variable_scattering", "pin_cell", "lattice")


def homogeneous(sigma_s: float = 1.0, L: int = 2, **overrides) -> ProblemConfig:
    """Pure scatterer on [-1, 1]^2, 16L x 16L cells, CL(8L, 4L)."""
    if L < 1:
        raise ConfigError("refinement level L must be >= 1")
    cfg = ProblemConfig(
        name=f"homogeneous_s{sigma_s:g}_L{L}",
        nx=16 * L, ny=16 * L, n_theta=8 * L, n_omega_z=4 * L,
        sigma_s=f"const:{sigma_s!r}", sigma_a="const:0", source=GAUSSIAN,
    )
    return cfg.replace(**overrides).validate()


def variable_scattering(full: bool = False, **overrides) -> ProblemConfig:
    n, (nt, nz) = (80, (40, 20)) if full else (40, (16, 8))
    cfg = ProblemConfig(
        name="variable_scattering" + ("" if full else "_desk"),
        nx=n, ny=n, n_theta=nt, n_omega_z=nz,
        sigma_s="variable_scattering", sigma_a="const:0", source=GAUSSIAN,
    )
    return cfg.replace(**overrides).validate()


def pin_cell(full: bool = False, **overrides) -> ProblemConfig:
    n, (nt, nz) = (80, (32, 16)) if full else (40, (16, 8))
    cfg = ProblemConfig(
        name="pin_cell" + ("" if full else "_desk"),
        nx=n, ny=n, n_theta=nt, n_omega_z=nz,
        sigma_s="pin_cell:0.1:100:0.5", sigma_a="const:0", source=GAUSSIAN,
    )
    return cfg.replace(**overrides).validate()


def lattice(full: bool = False, **overrides) -> ProblemConfig:
    n, (nt, nz) = (80, (32, 16)) if full else (40, (16, 8))
    cfg = ProblemConfig(
        name="lattice" + ("" if full else "_desk"),
        x_min=0.0, x_max=5.0, y_min=0.0, y_max=5.0,
        nx=n, ny=n, n_theta=nt, n_omega_z=nz,
        # lattice:<absorber cells>:<other cells>:<source cell>
        sigma_s="lattice:0:1:1", sigma_a="lattice:100:0:0", source="lattice:0:0:1",
    )
    return cfg.replace(**overrides).validate()


def preset(name: str, full: bool = False, **kwargs) -> ProblemConfig:
    """Look up a preset by name; ``homogeneous`` accepts sigma_s and L."""
    if name == "homogeneous":
        return homogeneous(**kwargs)
    builders = {"variable_scattering": variable_scattering, "pin_cell": pin_cell,
                "lattice": lattice}
    if name not in builders:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    return builders[name](full=full, **kwargs)
