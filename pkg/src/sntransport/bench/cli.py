"""Command line entry point: ``sntransport run | batch | presets``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from ..fields import FieldSpecError
from ..problem import MODES, ConfigError, MaxIterationsExceeded, ProblemConfig
from .presets import PRESETS, preset
from .run import run, write_outputs

EXIT_OK, EXIT_NOT_CONVERGED, EXIT_CONFIG = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    # usage errors are configuration errors; 2 is reserved for non-convergence
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _add_problem_args(p: argparse.ArgumentParser):
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset", choices=PRESETS)
    src.add_argument("--config", type=Path, help="key = value config file")
    p.add_argument("--full", action="store_true",
                   help="published resolution instead of the desk-scale variant")
    p.add_argument("--sigma-s", type=float, default=1.0, help="homogeneous preset only")
    p.add_argument("--L", type=int, default=2, help="homogeneous refinement level")
    p.add_argument("--mode", choices=MODES, default=None)
    p.add_argument("--p", type=int, default=None, help="angles added per inner iteration")
    p.add_argument("--q", type=int, default=None, help="greedy candidate count")
    p.add_argument("--out", type=Path, default=Path("results"))


def _load_config(args) -> ProblemConfig:
    if args.config is not None:
        try:
            text = args.config.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read {args.config}: {exc}") from exc
        cfg = ProblemConfig.from_text(text)
    elif args.preset == "homogeneous":
        cfg = preset("homogeneous", sigma_s=args.sigma_s, L=args.L)
    else:
        cfg = preset(args.preset, full=args.full)
    changes = {k: getattr(args, k) for k in ("mode", "p", "q") if getattr(args, k) is not None}
    return cfg.replace(**changes).validate()


def _summary(res) -> str:
    parts = [res.run_id]
    if res.full:
        parts.append(f"FR {res.full.iterations} it {res.full.wall_time:.2f}s")
    if res.lowrank:
        parts.append(f"LR {res.lowrank.iterations} it rank {res.lowrank.rank} "
                     f"{res.lowrank.wall_time:.2f}s")
    if res.comparison:
        c = res.comparison
        parts.append(f"C-R {100 * c.compression_ratio:.2f}% speedup {c.speedup:.2f} "
                     f"|dphi| {c.phi_diff:.2e}")
    return " | ".join(parts)


def cmd_run(args) -> int:
    cfg = _load_config(args)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    res = run(cfg)
    write_outputs([res], args.out)
    print(_summary(res))
    return EXIT_OK


def cmd_batch(args) -> int:
    cfg = _load_config(args)
    results = []
    for seed in args.seeds:
        res = run(cfg.replace(seed=seed))
        print(_summary(res))
        results.append(res)
    write_outputs(results, args.out)
    ranks = [r.lowrank.rank for r in results if r.lowrank]
    if ranks:
        print(f"mean rank over {len(ranks)} seeds: {sum(ranks) / len(ranks):.2f}")
    return EXIT_OK


def cmd_presets(args) -> int:
    if args.show:
        kw = {} if args.show == "homogeneous" else {"full": args.full}
        sys.stdout.write(preset(args.show, **kw).to_text())
        return EXIT_OK
    for name in PRESETS:
        print(name)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sntransport",
                     description="Full- and low-rank SI-DSA transport benchmarks")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p_run = sub.add_parser("run", help="solve one configuration")
    _add_problem_args(p_run)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.set_defaults(func=cmd_run)

    p_batch = sub.add_parser("batch", help="repeat a configuration over several seeds")
    _add_problem_args(p_batch)
    p_batch.add_argument("--seeds", type=int, nargs="+", default=list(range(8)))
    p_batch.set_defaults(func=cmd_batch)

    p_pre = sub.add_parser("presets", help="list presets or print one as a config file")
    p_pre.add_argument("--show", choices=PRESETS)
    p_pre.add_argument("--full", action="store_true")
    p_pre.set_defaults(func=cmd_presets)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, FieldSpecError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MaxIterationsExceeded as exc:
        print(f"not converged: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED


if __name__ == "__main__":
    sys.exit(main())
