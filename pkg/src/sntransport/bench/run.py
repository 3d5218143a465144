"""Run the full- and low-rank drivers on a config and write result files."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..fullrank import solve_full_rank
from ..lowrank import solve_low_rank
from ..problem import ConfigError, ProblemConfig, SolveReport, build_problem

log = logging.getLogger(__name__)

FMT = "%.17g"
METRIC_FIELDS = ("run_id", "preset", "seed", "n_x", "n_omega", "fr_iterations",
                 "lr_iterations", "rank", "compression_ratio", "oversampling",
                 "phi_diff", "psi_diff")
TIMING_FIELDS = ("run_id", "assembly_time", "fr_time", "lr_time", "speedup")
HISTORY_FIELDS = ("iteration", "diff_2", "diff_inf", "rank", "basis_rank", "oversampling")

# config fields that define the discrete problem (solver knobs excluded)
_DISCRETE_KEYS = ("x_min", "x_max", "y_min", "y_max", "nx", "ny", "K", "n_theta",
                  "n_omega_z", "sigma_s", "sigma_a", "source", "boundary")


def compression_ratio(rank: int, n_x: int, n_omega: int) -> float:
    """Low-rank storage r (N_x + N_omega) over full storage N_x N_omega."""
    return rank * (n_x + n_omega) / (n_x * n_omega)


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return FMT % v
    return str(v)


@dataclass
class Comparison:
    speedup: float
    compression_ratio: float
    phi_diff: float
    psi_diff: float | None


@dataclass
class RunResult:
    config: ProblemConfig
    n_x: int
    n_omega: int
    assembly_time: float
    full: SolveReport | None = None
    lowrank: SolveReport | None = None
    comparison: Comparison | None = None
    cell_centers: np.ndarray | None = None
    cell_means: dict | None = None

    @property
    def run_id(self) -> str:
        return f"{self.config.name}_seed{self.config.seed}"


def psi_difference(psi_full: np.ndarray, factors, block: int = 256) -> float:
    """Frobenius norm of Psi_full - X S V^T, one column block at a time."""
    total = 0.0
    n = psi_full.shape[1]
    for start in range(0, n, block):
        stop = min(start + block, n)
        total += float(np.sum((psi_full[:, start:stop] - factors.column_block(start, stop)) ** 2))
    return float(np.sqrt(total))


def compare(full: SolveReport, low: SolveReport, config_full: ProblemConfig,
            config_low: ProblemConfig, n_x: int, n_omega: int) -> Comparison:
    for key in _DISCRETE_KEYS:
        if getattr(config_full, key) != getattr(config_low, key):
            raise ConfigError(f"cannot compare runs with different {key}: "
                              f"{getattr(config_full, key)!r} vs {getattr(config_low, key)!r}")
    psi = None
    if full.psi is not None and low.factors is not None:
        psi = psi_difference(full.psi, low.factors)
    return Comparison(
        speedup=full.wall_time / low.wall_time if low.wall_time > 0 else float("inf"),
        compression_ratio=compression_ratio(low.rank, n_x, n_omega),
        phi_diff=float(np.linalg.norm(low.phi - full.phi)),
        psi_diff=psi,
    )


def run(config: ProblemConfig, mode: str | None = None) -> RunResult:
    mode = mode or config.mode
    config = config.replace(mode=mode).validate()
    problem = build_problem(config)
    res = RunResult(config, problem.ops.n_dofs, problem.quad.n_angles, problem.assembly_time)
    if mode in ("full", "both"):
        res.full = solve_full_rank(problem, store_psi=mode == "both")
        log.info("full rank: %d iterations, %.2f s", res.full.iterations, res.full.wall_time)
    if mode in ("lowrank", "both"):
        res.lowrank = solve_low_rank(problem)
        log.info("low rank: %d iterations, rank %d, %.2f s", res.lowrank.iterations,
                 res.lowrank.rank, res.lowrank.wall_time)
    if mode == "both":
        res.comparison = compare(res.full, res.lowrank, config, config, res.n_x, res.n_omega)
        res.full.psi = None  # large; the difference is all we keep
    space = problem.space
    res.cell_centers = np.column_stack(space.mesh.cell_centers())
    res.cell_means = {tag: space.cell_means(rep.phi)
                      for tag, rep in (("fr", res.full), ("lr", res.lowrank)) if rep is not None}
    return res


def metrics_row(res: RunResult) -> dict:
    fr, lr, cmp_ = res.full, res.lowrank, res.comparison
    return {
        "run_id": res.run_id,
        "preset": res.config.name,
        "seed": res.config.seed,
        "n_x": res.n_x,
        "n_omega": res.n_omega,
        "fr_iterations": fr.iterations if fr else None,
        "lr_iterations": lr.iterations if lr else None,
        "rank": lr.rank if lr else None,
        "compression_ratio": (compression_ratio(lr.rank, res.n_x, res.n_omega)
                              if lr else None),
        "oversampling": lr.oversampling[-1] if lr else None,
        "phi_diff": cmp_.phi_diff if cmp_ else None,
        "psi_diff": cmp_.psi_diff if cmp_ else None,
    }


def timings_row(res: RunResult) -> dict:
    return {
        "run_id": res.run_id,
        "assembly_time": res.assembly_time,
        "fr_time": res.full.wall_time if res.full else None,
        "lr_time": res.lowrank.wall_time if res.lowrank else None,
        "speedup": res.comparison.speedup if res.comparison else None,
    }


def _write_table(path: Path, fields, rows):
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(fields)
            for row in rows:
                w.writerow([_fmt(row[f]) for f in fields])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def history_rows(rep: SolveReport):
    for i in range(rep.iterations):
        lr = bool(rep.ranks)
        yield {
            "iteration": i + 1,
            "diff_2": rep.diff_2[i],
            "diff_inf": rep.diff_inf[i],
            "rank": rep.ranks[i] if lr else None,
            "basis_rank": rep.basis_ranks[i] if lr else None,
            "oversampling": rep.oversampling[i] if lr else None,
        }


def write_outputs(results: list[RunResult], out_dir) -> Path:
    """metrics.csv and timings.csv in ``out_dir`` plus one folder per run."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    _write_table(out / "metrics.csv", METRIC_FIELDS, [metrics_row(r) for r in results])
    _write_table(out / "timings.csv", TIMING_FIELDS, [timings_row(r) for r in results])
    for res in results:
        d = out / res.run_id
        d.mkdir(exist_ok=True)
        (d / "config.txt").write_text(res.config.to_text())
        for tag, rep in (("fr", res.full), ("lr", res.lowrank)):
            if rep is None:
                continue
            _write_table(d / f"history_{tag}.csv", HISTORY_FIELDS, history_rows(rep))
            grid = np.column_stack([res.cell_centers, res.cell_means[tag]])
            np.savetxt(d / f"flux_{tag}.txt", grid, fmt=FMT,
                       header="x_center y_center phi_cell_mean")
        if res.lowrank is not None:
            lines = [" ".join(map(str, s)) for s in res.lowrank.sampled]
            (d / "sampled_lr.txt").write_text("\n".join(lines) + "\n")
    return out
