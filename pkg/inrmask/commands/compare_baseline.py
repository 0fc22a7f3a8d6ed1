import argparse
from typing import Any, Dict, List

import numpy as np
from rich.panel import Panel
from rich.table import Table

from . import Command, CommandRegistry
from .common import add_classifier_arguments, fmt, load_classifier, load_pair, load_segmentation, output_root, run_seeds, show_progress
from ..artifacts import write_json, write_mask
from ..attribution import AttributionMask, RbfFilter, area_sweep, baseline_extremal, train_inr
from ..config import RunConfig
from ..console import console
from ..evaluation import iou, precision
from ..inr import CoordinateGrid


def consecutive_iou(masks: List[AttributionMask], threshold: float) -> List[float]:
    return [iou(a, b, threshold) for a, b in zip(masks, masks[1:])]


@CommandRegistry.register
class CompareBaselineCommand(Command):
    """Masks over the area grid from one network versus one direct optimization per area."""

    name = "compare-baseline"
    help = "Compare area continuity of the network masks with the direct-mask baseline."

    def add_arguments(self, parser: argparse.ArgumentParser) -> None:
        add_classifier_arguments(parser)

    def run(self, args: argparse.Namespace, config: RunConfig) -> int:
        pair = load_pair(args.image, config)
        clf = load_classifier(args, pair)
        segmentation = load_segmentation(args.segmentation)
        root = output_root(config, args.image)
        areas = config.area_grid
        progress = show_progress()

        def job(seed: int) -> Dict[str, Any]:
            explain_config = config.explain_config(seed, progress)
            rbf = RbfFilter(pair.spatial_shape, config.filter_radius_frac)
            net = train_inr(
                pair,
                clf,
                explain_config.train,
                explain_config.weights,
                network=explain_config.network,
                rbf=rbf,
                target_class=explain_config.target_class,
            )
            methods = {
                "inr": area_sweep(net, CoordinateGrid(*pair.spatial_shape), areas, rbf),
                "baseline": [
                    baseline_extremal(
                        pair,
                        clf,
                        a,
                        explain_config.train,
                        explain_config.weights,
                        rbf=rbf,
                        divisor=config.baseline_divisor,
                        learning_rate=config.baseline_learning_rate,
                        target_class=explain_config.target_class,
                    )
                    for a in areas
                ],
            }
            folder = root / f"seed{seed}"
            report: Dict[str, Any] = {"image": args.image.name, "seed": seed, "areas": list(areas)}
            for method, masks in methods.items():
                for a, mask in zip(areas, masks):
                    write_mask(folder / f"{method}_a{a:g}.pgm", mask)
                entry = {
                    "measured_area": [m.measured_area for m in masks],
                    "consecutive_iou": consecutive_iou(masks, config.binarize_threshold),
                }
                if segmentation is not None:
                    entry["precision"] = [
                        precision(m, segmentation, config.binarize_threshold, config.soft_precision) for m in masks
                    ]
                report[method] = entry
            write_json(folder / "report.json", report)
            return report

        outcomes = run_seeds(job, config.seeds, config.workers)

        table = Table(title=f"Measured area by requested area ({args.image.name})")
        table.add_column("seed")
        table.add_column("method")
        for a in areas:
            table.add_column(f"a={a:g}")
        table.add_column("median consecutive IoU")
        for seed, report in outcomes:
            for method in ("inr", "baseline"):
                entry = report[method]
                median = float(np.median(entry["consecutive_iou"])) if entry["consecutive_iou"] else None
                table.add_row(str(seed), method, *(fmt(v) for v in entry["measured_area"]), fmt(median))
        console.print(table)
        console.print(Panel(f"Artifacts written to {root}", title="[bold green]Done[/bold green]", border_style="green"))
        return 0
