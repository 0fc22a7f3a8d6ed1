import argparse
import logging
from pathlib import Path
from typing import List, Optional

# Import commands to register them
from inrmask.commands import CommandRegistry, attribute, compare_baseline, evaluate, gen_dataset, multi_explain, train_toy  # noqa: F401

from inrmask.config import FULL_SCHEDULE, RunConfig, load_config
from inrmask.console import error_console, setup_logging
from inrmask.errors import InrMaskError

logger = logging.getLogger("inrmask.cli")


def _float_list(text: str):
    try:
        return tuple(float(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"'{text}' is not a comma-separated list of numbers") from None


def _int_list(text: str):
    try:
        return tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"'{text}' is not a comma-separated list of integers") from None


def common_arguments() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--config", type=Path, help="key = value configuration file.")
    parent.add_argument("--seed", type=int, action="append", help="Seed to run; repeatable.")
    parent.add_argument("--seeds", type=_int_list, help="Comma-separated seeds.")
    parent.add_argument("--out", type=str, help="Output directory.")
    parent.add_argument("--area-grid", type=_float_list, help="Comma-separated candidate areas.")
    parent.add_argument("--phi0", type=float, help="Absolute class-probability threshold.")
    parent.add_argument("--phi0-rel", type=float, help="Threshold relative to the probability on the original image.")
    parent.add_argument("--epochs", type=int)
    parent.add_argument("--lr", type=float, help="Learning rate of the mask network.")
    parent.add_argument("--lambda-r", type=float, help="Weight of the area regularizer.")
    parent.add_argument("--lambda-d", type=float, help="Weight of the Dice penalty.")
    parent.add_argument("--blur-sigma-frac", type=float, help="Blur sigma as a fraction of the image side.")
    parent.add_argument("--filter-radius-frac", type=float, help="RBF filter bandwidth as a fraction of the image side.")
    parent.add_argument("--cutoff", type=float, help="Saliency cut-off used by evaluate.")
    parent.add_argument("--target-class", type=int, help="Class to explain (default: predicted class).")
    parent.add_argument("--workers", type=int, help="Seeds processed in parallel.")
    parent.add_argument("--full-schedule", action="store_true", help="Use the full-length training schedule.")
    parent.add_argument("--dump-config", type=Path, help="Write the effective configuration to this path.")
    parent.add_argument("-v", "--verbose", action="count", default=0, help="-v for progress, -vv for debug logs.")
    return parent


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="inrmask", description="Extremal attribution masks from an area-conditioned implicit network."
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    parent = common_arguments()
    for command_cls in CommandRegistry.list_commands():
        sub = subparsers.add_parser(command_cls.name, help=command_cls.help, parents=[parent])
        command_cls().add_arguments(sub)
    return parser


def effective_config(args: argparse.Namespace) -> RunConfig:
    config = load_config(args.config)
    if args.full_schedule:
        config = config.with_overrides(**FULL_SCHEDULE)
    seeds = tuple(dict.fromkeys(tuple(args.seed or ()) + tuple(args.seeds or ())))
    return config.with_overrides(
        seeds=seeds or None,
        out_dir=args.out,
        area_grid=args.area_grid,
        phi0=args.phi0,
        phi0_rel=args.phi0_rel,
        epochs=args.epochs,
        learning_rate=args.lr,
        lambda_r=args.lambda_r,
        lambda_d=args.lambda_d,
        blur_sigma_frac=args.blur_sigma_frac,
        filter_radius_frac=args.filter_radius_frac,
        cutoff=args.cutoff,
        target_class=args.target_class,
        workers=args.workers,
    )


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.verbose)
    try:
        config = effective_config(args)
        if args.dump_config:
            config.dump(args.dump_config)
            logger.info("Wrote configuration to %s", args.dump_config)
        return CommandRegistry.run(args.command, args, config)
    except (InrMaskError, OSError, ValueError) as e:
        error_console.print(f"Error: {e}", style="bold red", markup=False, highlight=False)
        return 1
    except KeyboardInterrupt:
        error_console.print("\nInterrupted.", style="bold red")
        return 130


if __name__ == "__main__":
    raise SystemExit(main())
