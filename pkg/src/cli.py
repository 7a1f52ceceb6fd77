import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from src.experiments.experiments import build_config, cmd_image, cmd_synth, cmd_trace
from src.experiments.models import Command
from src.solver.errors import ConfigurationError, EirnriError, ImageIOError, InvalidArgumentError
from src.solver.models import InitKind, Variant

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CERTIFIED_FAILURE = 1
EXIT_CONFIG_ERROR = 2

# flag dest -> SolverConfig field
SOLVER_FLAGS = {
    "beta": "beta",
    "mu": "mu",
    "eps0": "eps0",
    "eps_fixed": "eps_fixed",
    "opttol": "opttol",
    "klopt": "klopt",
    "itmax": "itmax",
    "init": "init",
    "init_rank": "init_rank",
    "keep_eps": "keep_eps_history",
    "trace_every": "trace_every",
}

# flag dest -> ExperimentConfig field
EXPERIMENT_FLAGS = {
    "m": "m",
    "n": "n",
    "rank": "ranks",
    "sr": "srs",
    "variant": "variants",
    "alpha": "alphas",
    "lam": "lam",
    "lam_rel": "lam_rel",
    "p": "p",
    "seed": "seed",
    "seeds": "seeds",
    "workers": "workers",
    "out_dir": "out_dir",
    "mask": "mask",
    "block_rects": "block_rects",
    "input": "input",
    "snapshot": "snapshot",
    "save_snapshot": "save_snapshot",
}

COMMANDS = {
    Command.SYNTH: cmd_synth,
    Command.IMAGE: cmd_image,
    Command.TRACE: cmd_trace,
}


def _rect(text: str) -> Tuple[int, int, int, int]:
    try:
        row, col, height, width = (int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected row,col,height,width, got '{text}'")
    return row, col, height, width


def _common_parser() -> argparse.ArgumentParser:
    # every flag defaults to None so that only explicit values override the config file
    parser = argparse.ArgumentParser(add_help=False)
    parser.add_argument('--config', type=str, help='JSON file with ExperimentConfig fields (flags take precedence)')
    parser.add_argument('--log-level', type=str, default="INFO",
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"], help='Logging level (default: INFO)')
    parser.add_argument('--m', type=int, help='Number of rows')
    parser.add_argument('--n', type=int, help='Number of columns')
    parser.add_argument('--rank', type=int, nargs='+', help='Target rank(s) r*')
    parser.add_argument('--sr', type=float, nargs='+', help='Sampling ratio(s) in (0, 1]')
    lam = parser.add_mutually_exclusive_group()
    lam.add_argument('--lambda', dest='lam', type=float, help='Absolute regularization weight')
    lam.add_argument('--lambda-rel', dest='lam_rel', type=float, help='lambda = value * ||X*||_inf')
    parser.add_argument('--p', type=float, help='Schatten exponent in (0, 1)')
    parser.add_argument('--beta', type=float, help='Proximal parameter, must exceed L_f = 1')
    parser.add_argument('--mu', type=float, help='Perturbation shrink factor in (0, 1)')
    parser.add_argument('--alpha', type=float, nargs='+', help='Extrapolation parameter(s)')
    parser.add_argument('--eps0', type=float, help='Initial perturbation')
    parser.add_argument('--eps-fixed', dest='eps_fixed', type=float, help='Fixed perturbation of PIRNN')
    parser.add_argument('--variant', type=str.upper, nargs='+', choices=[v.value for v in Variant],
                        help='Solver variant(s), case-insensitive')
    parser.add_argument('--opttol', type=float, help='RelErr / RelDist stopping tolerance')
    parser.add_argument('--klopt', type=float, help='Max-norm step stopping tolerance')
    parser.add_argument('--itmax', type=int, help='Iteration limit')
    parser.add_argument('--init', type=str, choices=[k.value for k in InitKind], help='Starting point')
    parser.add_argument('--init-rank', dest='init_rank', type=int, help='Rank of the lowrank starting point')
    parser.add_argument('--keep-eps', dest='keep_eps', action='store_const', const=True,
                        help='Store the full eps vector in every record')
    parser.add_argument('--trace-every', dest='trace_every', type=int, help='Record every k-th iteration')
    parser.add_argument('--no-relerr-stop', dest='stop_on_rel_err', action='store_const', const=False,
                        help='Only stop on RelDist, the step size or itmax')
    parser.add_argument('--seed', type=int, help='First seed')
    parser.add_argument('--seeds', type=int, help='Number of seeds per grid cell')
    parser.add_argument('--workers', type=int, help='Concurrent runs')
    parser.add_argument('--out-dir', dest='out_dir', type=str, help='Output directory')
    parser.add_argument('--mask', type=str, choices=["random", "block"], help='Sampling mask kind')
    parser.add_argument('--block-rects', dest='block_rects', type=_rect, nargs='+',
                        help='Hidden rectangles as row,col,height,width')
    return parser


def parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    common = _common_parser()
    parser = argparse.ArgumentParser(description='Schatten-p matrix completion experiments')
    sub = parser.add_subparsers(dest='command', required=True)
    sub.add_parser('synth', parents=[common], help='Seeded synthetic recovery grid')
    image = sub.add_parser('image', parents=[common], help='Low-rank image recovery')
    image.add_argument('--input', type=str, help='8-bit PNG (grayscale or RGB)')
    trace = sub.add_parser('trace', parents=[common], help='One fully recorded run with certificate audit')
    trace.add_argument('--snapshot', type=str, help='Instance snapshot (.npz) to solve')
    trace.add_argument('--save-snapshot', dest='save_snapshot', type=str, help='Write the instance to this .npz')
    return parser.parse_args(argv)


def overrides_from_args(args: argparse.Namespace) -> Dict[str, Any]:
    values = vars(args)
    res: Dict[str, Any] = {}
    for dest, field in EXPERIMENT_FLAGS.items():
        if values.get(dest) is not None:
            res[field] = values[dest]
    solver = {field: values[dest] for dest, field in SOLVER_FLAGS.items() if values.get(dest) is not None}
    if values.get("stop_on_rel_err") is not None:
        solver["stop_on_rel_err"] = values["stop_on_rel_err"]
    if solver:
        res["solver"] = solver
    return res


def _read_config_file(path: str) -> Dict[str, Any]:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigurationError(f"cannot read config file {path}: {e}") from e


def main(argv: Optional[List[str]] = None) -> int:
    args = parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level))
    command = Command(args.command)
    try:
        file_data = _read_config_file(args.config) if args.config else None
        cfg = build_config(command, file_data, overrides_from_args(args))
        return COMMANDS[command](cfg)
    except (ConfigurationError, InvalidArgumentError, ImageIOError) as e:
        logger.error(f"{command.value}: {e}")
        return EXIT_CONFIG_ERROR
    except EirnriError as e:
        logger.error(f"{command.value} failed: {e}")
        return EXIT_CERTIFIED_FAILURE


if __name__ == "__main__":
    sys.exit(main())
