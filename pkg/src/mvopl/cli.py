"""Command-line entry point: ``mvopl <subcommand> ...``.

Exit codes: 0 success, 1 validation error (including bad usage), 2 I/O error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from mvopl import io, simulation
from mvopl.core import Deterministic, KernelConfig, RngSeed, ValidationError
from mvopl.estimators import EssMethod, EstimatorKind, evaluate
from mvopl.learner import learn

log = logging.getLogger("mvopl")

EXIT_OK, EXIT_VALIDATION, EXIT_IO = 0, 1, 2


class UsageError(ValidationError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def _float_list(text: str) -> list[float]:
    try:
        values = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected REAL[,REAL...], got {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("expected at least one value")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mvopl", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="generate a logged dataset")
    p.add_argument("--env", required=True, choices=["coverage-logging", "benchmark"])
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--meta", required=True)

    p = sub.add_parser("evaluate", help="off-policy evaluation of a target policy")
    p.add_argument("--data", required=True)
    p.add_argument("--meta", required=True)
    p.add_argument("--target", required=True, help="policy descriptor JSON")
    p.add_argument("--kernel-sigma", type=_float_list, default=None,
                   help="kernel bandwidth(s) for a deterministic target; one report each")
    p.add_argument("--kind", choices=[k.value for k in EstimatorKind], default="snips")
    p.add_argument("--ess-method", choices=[m.value for m in EssMethod], default="dinfr")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--out", required=True)

    p = sub.add_parser("learn", help="maximise the pessimistic lower bound")
    p.add_argument("--data", required=True)
    p.add_argument("--meta", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("coverage", help="run the interval coverage study")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("reduction", help="minimum sample size per interval method")
    p.add_argument("--table", required=True)
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--out", required=True)

    p = sub.add_parser("cod", help="run the curse-of-dimensionality study")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-cdf", required=True)
    p.add_argument("--out-mass", required=True)
    return parser


def _distinct_paths(*paths: str) -> None:
    resolved = [Path(p).resolve() for p in paths]
    if len(set(resolved)) != len(resolved):
        raise ValidationError("input and output paths must all be distinct")


def _cmd_simulate(args) -> None:
    _distinct_paths(args.out, args.meta)
    seed = RngSeed(args.seed)
    if args.n < 1 or args.d < 1:
        raise ValidationError("--n and --d must be positive")
    if args.env == "benchmark":
        dataset = simulation.make_learning_benchmark(seed, args.n, args.d)
    else:
        dataset = simulation.coverage_logging_dataset(seed, args.n, args.d)
    io.write_dataset(dataset, args.out, args.meta, created_by=f"mvopl simulate --env {args.env}")


def _cmd_evaluate(args) -> None:
    _distinct_paths(args.data, args.meta, args.target, args.out)
    dataset = io.read_dataset(args.data, args.meta)
    target = io.policy_from_dict(io.load_json_object(args.target))
    kind, method = EstimatorKind(args.kind), EssMethod(args.ess_method)
    if isinstance(target, Deterministic):
        if not args.kernel_sigma:
            raise ValidationError("a deterministic target needs --kernel-sigma")
        kernels = [KernelConfig.isotropic(s, dataset.d) for s in args.kernel_sigma]
    else:
        if args.kernel_sigma:
            log.warning("target is stochastic; --kernel-sigma is ignored")
        kernels = [None]
    reports = [
        io.report_to_dict(evaluate(dataset, target, k, kind, method, args.alpha), k)
        for k in kernels
    ]
    io.write_json(args.out, {"target": io.policy_to_dict(target), "reports": reports})


def _cmd_learn(args) -> None:
    _distinct_paths(args.data, args.meta, args.config, args.out)
    dataset = io.read_dataset(args.data, args.meta)
    config, init = io.crm_config_from_dict(io.load_json_object(args.config), dataset.d)
    result = learn(dataset, config, init)
    io.write_json(args.out, io.learn_result_to_dict(result))


def _cmd_coverage(args) -> None:
    _distinct_paths(args.config, args.out)
    config = io.coverage_config_from_dict(io.load_json_object(args.config), args.seed)
    io.write_coverage_csv(args.out, simulation.run_coverage_study(config))


def _cmd_reduction(args) -> None:
    _distinct_paths(args.table, args.out)
    if not 0.0 < args.level < 1.0:
        raise ValidationError("--level must lie in (0, 1)")
    rows = io.read_coverage_csv(args.table)
    io.write_reduction_csv(args.out, simulation.min_sample_size_for_coverage(rows, args.level))


def _cmd_cod(args) -> None:
    _distinct_paths(args.config, args.out_cdf, args.out_mass)
    config = io.cod_config_from_dict(io.load_json_object(args.config), args.seed)
    io.write_cod_csvs(args.out_cdf, args.out_mass, simulation.run_cod_study(config))


COMMANDS = {
    "simulate": _cmd_simulate,
    "evaluate": _cmd_evaluate,
    "learn": _cmd_learn,
    "coverage": _cmd_coverage,
    "reduction": _cmd_reduction,
    "cod": _cmd_cod,
}


def run_cli(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(name)s: %(levelname)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"mvopl: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"mvopl: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


def main() -> int:
    return run_cli(sys.argv[1:])
