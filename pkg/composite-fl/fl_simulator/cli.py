"""
Command-Line Interface

    fl-sim run --preset fig1-full-grad --algo fedmid --rounds 100
    fl-sim run --config my_experiment.ini --set optimizer.tau=5 --snapshots
    fl-sim verify runs/fig1-full-grad-proposed
    fl-sim presets

Settings are layered: defaults (or the preset), then --config, then --set
assignments, then the dedicated flags. Exit status is 0 on success, 1 on
divergence or a failed invariant and 2 on configuration, preset, input or
output problems.
"""

import argparse
import logging
import sys
from typing import List, Optional, Sequence

from . import __version__
from .config import DEFAULT_CONFIG_FILE, OUTPUT_ROOT_ENV, ExperimentConfig
from .errors import (ConfigError, DivergenceError, FLSimError, InvalidArgumentError, MissingSnapshotsError,
                     OutputPathError, ParseError, UnknownPresetError)
from .harness import RunResult, build_objective, load_run, run_experiment
from .invariants import FAIL, NOT_APPLICABLE, InvariantVerdict, invariant_suite
from .presets import PRESETS, get_preset

logger = logging.getLogger("fl_simulator")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

ALGORITHMS = ("proposed", "fedmid", "fedda", "fastfedda", "pgd")

_STATUS_MARK = {"pass": "✅", FAIL: "❌", NOT_APPLICABLE: "➖"}
_USAGE_ERRORS = (ConfigError, UnknownPresetError, OutputPathError, MissingSnapshotsError,
                 ParseError, InvalidArgumentError)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fl-sim", description="Composite federated optimization lab")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    parser.add_argument("-q", "--quiet", action="store_true", help="warnings and errors only")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment")
    source = run.add_mutually_exclusive_group()
    source.add_argument("--preset", help="named experiment (see `presets`)")
    source.add_argument("--config", help=f"INI experiment file (default {DEFAULT_CONFIG_FILE.name})")
    run.add_argument("--out", help=f"output directory (default ${OUTPUT_ROOT_ENV}/<name>-<algo>)")
    run.add_argument("--rounds", type=int, help="communication rounds R")
    run.add_argument("--threads", type=int, help="client worker threads")
    run.add_argument("--snapshots", action="store_true", default=None,
                     help="log per-round state and run the invariant suite")
    run.add_argument("--seed", type=int, help="master seed")
    run.add_argument("--algo", choices=ALGORITHMS, help="algorithm to run")
    run.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
                     help="override any config value; repeatable")

    verify = sub.add_parser("verify", help="re-run the invariant suite on a logged run")
    verify.add_argument("run_dir", help="run directory written with snapshots on")

    sub.add_parser("presets", help="list named experiments")
    return parser


def configure_logging(verbose: bool = False, quiet: bool = False) -> None:
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)-7s %(name)s: %(message)s")
    logging.getLogger("fl_simulator").setLevel(level)


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    """Layer preset/config file, --set assignments and flags into one config."""
    if args.preset:
        preset = get_preset(args.preset)
        cfg = preset.config_for(args.algo) if args.algo else preset.config
    elif args.config:
        cfg = ExperimentConfig.load_from_file(args.config)
    else:
        cfg = ExperimentConfig.load_from_file(DEFAULT_CONFIG_FILE)
    if args.overrides:
        cfg = cfg.with_overrides(args.overrides)
    changes = {key: value for key, value in (("rounds", args.rounds), ("threads", args.threads),
                                             ("seed", args.seed), ("snapshots", args.snapshots),
                                             ("output_dir", args.out)) if value is not None}
    if args.algo and not args.preset:
        changes["algorithm"] = args.algo
    return cfg.replace(**changes) if changes else cfg


def print_verdicts(verdicts: Sequence[InvariantVerdict]) -> None:
    print(f"{'invariant':<22} {'status':<8} {'max violation':>14}  round  detail")
    for v in verdicts:
        where = str(v.round) if v.round is not None else "-"
        print(f"{_STATUS_MARK[v.status]} {v.name:<20} {v.status:<8} {v.max_violation:>14.3e}  {where:>5}  {v.detail}")


def _print_summary(result: RunResult) -> None:
    last = result.metrics[-1]
    log = result.log
    print(f"✅ {log.algorithm}: {len(result.metrics)} metric rows, final optimality {last.optimality:.3e}, "
          f"F = {last.f_value:.10g}")
    if log.accuracy is not None:
        print(f"   training accuracy {log.accuracy:.3f}")
    if log.step_rule_violations:
        print("➖ step rule not satisfied (bounds are advisory): " + "; ".join(log.step_rule_violations))
    if result.bounds is not None:
        b = result.bounds
        mark = "✅" if b.sublinear_holds else "❌"
        label = " (advisory)" if b.advisory else ""
        print(f"{mark} sublinear bound{label}: mean ‖G‖² = {b.sublinear_measured:.3e} <= {b.sublinear_bound:.3e}")
        print(f"   empirical contraction factor {b.empirical_rate:.6f}")
    if result.verdicts is not None:
        print_verdicts(result.verdicts)
    if result.out_dir is not None:
        print(f"Outputs written to {result.out_dir}")


def cmd_run(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    try:
        result = run_experiment(cfg, cfg.output_dir or None)
    except DivergenceError as exc:
        print(f"❌ run diverged: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    _print_summary(result)
    if result.verdicts is not None and any(v.status == FAIL for v in result.verdicts):
        return EXIT_FAILURE
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    log = load_run(args.run_dir)
    verdicts = invariant_suite(log, build_objective(log.config))
    print_verdicts(verdicts)
    failed = [v for v in verdicts if v.status == FAIL]
    if failed:
        for v in failed:
            print(f"❌ {v.name} failed at round {v.round}", file=sys.stderr)
        return EXIT_FAILURE
    print("✅ all applicable invariants pass")
    return EXIT_OK


def cmd_presets(args: argparse.Namespace) -> int:
    for name, preset in PRESETS.items():
        cfg = preset.config
        opt = cfg.optimizer
        batch = "full" if opt.batch_size is None else opt.batch_size
        print(f"{name:<22} {preset.description}")
        print(f"{'':<22} n={cfg.data.clients} d={cfg.data.dim} R={cfg.rounds} "
              f"eta={opt.eta:g} eta_g={opt.eta_g:g} tau={opt.tau} b={batch}")
    return EXIT_OK


_COMMANDS = {"run": cmd_run, "verify": cmd_verify, "presets": cmd_presets}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.verbose, args.quiet)
    try:
        return _COMMANDS[args.command](args)
    except _USAGE_ERRORS as exc:
        print(f"❌ {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"❌ cannot read input: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FLSimError as exc:
        print(f"❌ {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
