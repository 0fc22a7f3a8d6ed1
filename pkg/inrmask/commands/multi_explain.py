import argparse
from typing import Any, Dict, List

from rich.panel import Panel
from rich.table import Table

from . import Command, CommandRegistry
from .common import add_classifier_arguments, fmt, load_classifier, load_pair, load_segmentation, output_root, run_seeds, show_progress
from ..artifacts import write_json, write_mask, write_mask_values, write_overlay
from ..attribution import multi_explain_results
from ..config import RunConfig
from ..console import console
from ..evaluation import dice_matrix, precision


@CommandRegistry.register
class MultiExplainCommand(Command):
    """Iteratively search for masks that avoid the evidence already found."""

    name = "multi-explain"
    help = "Generate several distinct attribution masks for one image."

    def add_arguments(self, parser: argparse.ArgumentParser) -> None:
        add_classifier_arguments(parser)
        parser.add_argument("--count", type=int, default=3, help="Number of masks to produce (default: 3).")

    def run(self, args: argparse.Namespace, config: RunConfig) -> int:
        if args.count < 1:
            raise ValueError(f"--count must be at least 1, got {args.count}")
        pair = load_pair(args.image, config)
        clf = load_classifier(args, pair)
        segmentation = load_segmentation(args.segmentation)
        root = output_root(config, args.image)
        progress = show_progress()

        def job(seed: int) -> List[Dict[str, Any]]:
            results = multi_explain_results(pair, clf, args.count - 1, config.explain_config(seed, progress))
            folder = root / f"seed{seed}"
            records = []
            for result in results:
                iteration = result.mask.provenance.iteration
                write_mask(folder / f"mask_iter{iteration}.pgm", result.mask)
                write_mask_values(folder / f"mask_iter{iteration}.inrw", result.mask)
                write_overlay(folder / f"overlay_iter{iteration}.ppm", result.mask, pair)
                record = result.provenance()
                if segmentation is not None:
                    record["precision"] = precision(
                        result.mask, segmentation, config.binarize_threshold, config.soft_precision
                    )
                records.append(record)
            write_json(folder / "provenance.json", {"image": args.image.name, "iterations": records})
            write_json(folder / "dice.json", {"dice": dice_matrix([r.mask for r in results])})
            return records

        outcomes = run_seeds(job, config.seeds, config.workers)

        table = Table(title=f"Multiple explanations of {args.image.name}")
        for column in ("seed", "iteration", "a*", "measured area", "Φ(Î)", "precision"):
            table.add_column(column)
        for seed, records in outcomes:
            for record in records:
                table.add_row(
                    str(seed),
                    str(record["iteration"]),
                    fmt(record["a"], 3),
                    fmt(record["measured_area"]),
                    fmt(record["phi_masked"]),
                    fmt(record.get("precision")),
                )
        console.print(table)
        console.print(Panel(f"Artifacts written to {root}", title="[bold green]Done[/bold green]", border_style="green"))
        return 0
