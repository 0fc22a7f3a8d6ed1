import argparse
from typing import Any, Dict

from rich.panel import Panel
from rich.table import Table

from . import Command, CommandRegistry
from .common import add_classifier_arguments, fmt, load_classifier, load_pair, load_segmentation, output_root, run_seeds, show_progress
from ..artifacts import write_json, write_mask, write_mask_values, write_overlay
from ..attribution import explain
from ..config import RunConfig
from ..console import console
from ..evaluation import precision
from ..weights import save_weights


@CommandRegistry.register
class AttributeCommand(Command):
    """Train one mask network per seed and keep the smallest sufficient mask."""

    name = "attribute"
    help = "Compute an extremal attribution mask for one image."

    def add_arguments(self, parser: argparse.ArgumentParser) -> None:
        add_classifier_arguments(parser)
        parser.add_argument("--save-network", action="store_true", help="Also write each trained mask network.")

    def run(self, args: argparse.Namespace, config: RunConfig) -> int:
        pair = load_pair(args.image, config)
        clf = load_classifier(args, pair)
        segmentation = load_segmentation(args.segmentation)
        root = output_root(config, args.image)
        progress = show_progress()

        def job(seed: int) -> Dict[str, Any]:
            net, result = explain(pair, clf, config.explain_config(seed, progress))
            folder = root / f"seed{seed}"
            write_mask(folder / "mask.pgm", result.mask)
            write_mask_values(folder / "mask.inrw", result.mask)
            write_overlay(folder / "overlay.ppm", result.mask, pair)
            if args.save_network:
                save_weights(folder / "network.inrw", net.state_dict())
            record = result.provenance()
            record["image"] = args.image.name
            record["phi_by_area"] = {repr(a): phi for a, phi in result.phi_by_area.items()}
            record["final_loss"] = net.history[-1]
            if segmentation is not None:
                record["precision"] = precision(
                    result.mask, segmentation, config.binarize_threshold, config.soft_precision
                )
            write_json(folder / "provenance.json", record)
            return record

        records = run_seeds(job, config.seeds, config.workers)

        table = Table(title=f"Attribution of {args.image.name}")
        for column in ("seed", "a*", "measured area", "Φ(I)", "Φ(Î)", "precision", "insufficient"):
            table.add_column(column)
        for seed, record in records:
            table.add_row(
                str(seed),
                fmt(record["a"], 3),
                fmt(record["measured_area"]),
                fmt(record["phi_original"]),
                fmt(record["phi_masked"]),
                fmt(record.get("precision")),
                "yes" if record["insufficient"] else "no",
            )
        console.print(table)
        console.print(Panel(f"Artifacts written to {root}", title="[bold green]Done[/bold green]", border_style="green"))
        return 0
