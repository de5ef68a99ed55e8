import argparse
import sys
from collections.abc import Sequence
from pathlib import Path

from pydantic import ValidationError

from peiv_estimation.cli.commands import cmd_benchmark, cmd_estimate, cmd_simulate
from peiv_estimation.core.errors import ExitCode, PeivError
from peiv_estimation.core.logger import get_logger, setup_logging
from peiv_estimation.core.settings import ExperimentConfig, Settings, load_config
from peiv_estimation.domain.models import EstimatorName

logger = get_logger("cli.app")


def _positive_int(value: str) -> int:
    ivalue = int(value)
    if ivalue < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return ivalue


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", nargs="?", type=Path, default=None, help="experiment YAML (default: $PEIV_CONFIG_PATH)")
    common.add_argument("--threads", type=_positive_int, default=None, help="Monte Carlo worker threads (default: $PEIV_THREADS)")
    common.add_argument("--quiet", action="store_true", help="only warnings and errors on stderr")
    common.add_argument("--log-json", dest="log_json", action="store_true", help="structured JSON log lines")

    parser = argparse.ArgumentParser(
        prog="peiv",
        description="Joint state and parameter estimation for parameter-affine linear Gaussian models",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", parents=[common], help="simulate one trajectory to CSV")
    p_sim.add_argument("--seed", type=int, default=None)
    p_sim.add_argument("--out", type=Path, default=None)

    p_est = sub.add_parser("estimate", parents=[common], help="run one estimator on a measurement file")
    p_est.add_argument("--method", choices=[m.value for m in EstimatorName], required=True)
    p_est.add_argument("--data", type=Path, required=True)
    p_est.add_argument("--out", type=Path, default=None)

    p_bench = sub.add_parser("benchmark", parents=[common], help="Monte Carlo benchmark over batch sizes")
    p_bench.add_argument("--out-dir", dest="out_dir", type=Path, default=None)
    return parser


def resolve_threads(args: argparse.Namespace, cfg: ExperimentConfig) -> int:
    if args.threads is not None:
        return int(args.threads)
    env_threads = Settings().threads
    if env_threads is not None:
        return env_threads
    return cfg.montecarlo.threads


def run(args: argparse.Namespace) -> list[Path]:
    cfg = load_config(args.config)
    if args.log_json:
        cfg.logging.json_output = True
    setup_logging(cfg.logging, quiet=args.quiet)
    logger.debug("Running %s with config %s", args.command, args.config)

    if args.command == "simulate":
        return cmd_simulate(cfg, seed=args.seed, out=args.out)
    if args.command == "estimate":
        return cmd_estimate(cfg, method=EstimatorName(args.method), data=args.data, out=args.out)
    return cmd_benchmark(cfg, out_dir=args.out_dir, threads=resolve_threads(args, cfg))


def main(argv: Sequence[str] | None = None) -> int:
    """Entry point; returns the process exit code (0 ok, 2 usage, 3 numerical)."""
    args = build_parser().parse_args(argv)
    try:
        written = run(args)
    except PeivError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return int(exc.exit_code)
    except (OSError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return int(ExitCode.USAGE)

    for path in written:
        print(path)
    return int(ExitCode.OK)


if __name__ == "__main__":
    sys.exit(main())
