"""Helpers shared by the explanation commands."""
from __future__ import annotations

import argparse
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple, TypeVar

import numpy as np

from ..config import RunConfig
from ..console import error_console
from ..errors import DivergenceError
from ..evaluation import ReferenceSegmentation
from ..models import Classifier, ImagePair, OracleClassifier, ToyCnn
from ..netpbm import load_binary_map, load_image

logger = logging.getLogger(__name__)

T = TypeVar("T")


def add_classifier_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("image", type=Path, help="Image to explain (PPM or PGM).")
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--model", type=Path, help="ToyCnn weight file (.inrw).")
    source.add_argument(
        "--oracle-region",
        type=Path,
        action="append",
        help="PGM region map for an oracle classifier; repeat for a multi-region oracle.",
    )
    parser.add_argument("--segmentation", type=Path, help="Reference segmentation (PGM) for precision.")


def load_pair(path: Path, config: RunConfig) -> ImagePair:
    if not path.is_file():
        raise FileNotFoundError(f"Image not found: {path}")
    return ImagePair.build(load_image(path), config.perturbation, config.blur_sigma_frac)


def load_classifier(args: argparse.Namespace, pair: ImagePair) -> Classifier:
    if args.model is not None:
        if not args.model.is_file():
            raise FileNotFoundError(f"Model not found: {args.model}")
        return ToyCnn.load(args.model)
    regions = [load_binary_map(path) for path in args.oracle_region]
    return OracleClassifier.calibrated(regions, pair.original, pair.perturbed)


def load_segmentation(path: Optional[Path]) -> Optional[ReferenceSegmentation]:
    if path is None:
        return None
    return ReferenceSegmentation(load_binary_map(path))


def output_root(config: RunConfig, image: Path) -> Path:
    return Path(config.out_dir) / image.stem


def show_progress() -> bool:
    return error_console.is_terminal


def run_seeds(job: Callable[[int], T], seeds: Sequence[int], workers: int = 1) -> List[Tuple[int, T]]:
    """
    Run ``job`` for every seed, on ``workers`` threads, and keep the ones that converged.

    Diverged seeds are logged and dropped; if every seed diverges the last error is raised.
    """

    def guarded(seed: int):
        try:
            return job(seed)
        except DivergenceError as e:
            logger.warning("Seed %d skipped: %s", seed, e)
            return e

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(guarded, seeds))
    else:
        outcomes = [guarded(seed) for seed in seeds]

    done = [(seed, out) for seed, out in zip(seeds, outcomes) if not isinstance(out, DivergenceError)]
    if not done:
        raise outcomes[-1]
    return done


def fmt(value: Optional[float], digits: int = 4) -> str:
    return "-" if value is None or np.isnan(value) else f"{value:.{digits}f}"
