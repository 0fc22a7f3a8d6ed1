import argparse
import logging
import re
from pathlib import Path
from typing import Dict, List

from rich.panel import Panel
from rich.progress import Progress, SpinnerColumn, TextColumn
from rich.table import Table

from . import Command, CommandRegistry
from .common import fmt
from ..artifacts import load_mask, write_jsonl
from ..attribution import AttributionMask, Provenance
from ..config import RunConfig
from ..console import console
from ..errors import EmptyInputError
from ..evaluation import ReferenceSegmentation, aggregate_seeds, corpus_summary, threshold_saliency
from ..netpbm import load_binary_map

logger = logging.getLogger(__name__)

_SEED_DIR = re.compile(r"^seed(\d+)$")
_MASK_FILE = re.compile(r"^mask(?:_iter(\d+))?\.pgm$")


def collect_masks(mask_dir: Path, cutoff: float) -> Dict[str, List[AttributionMask]]:
    """
    Masks per image stem.

    ``<stem>/seed<k>/mask.pgm`` and ``mask_iter<i>.pgm`` are attribution outputs; a
    ``.inrw`` sidecar next to one is preferred. A flat ``<stem>.pgm`` is a saliency
    map and is thresholded at ``cutoff``.
    """
    found: Dict[str, List[AttributionMask]] = {}
    for path in sorted(mask_dir.glob("*.pgm")):
        binary = threshold_saliency(load_mask(path), cutoff)
        found.setdefault(path.stem, []).append(AttributionMask(binary, 0.0, Provenance("saliency", 0, 0)))
    for image_dir in sorted(p for p in mask_dir.iterdir() if p.is_dir()):
        for seed_dir in sorted(image_dir.iterdir()):
            seed_match = _SEED_DIR.match(seed_dir.name)
            if not seed_match or not seed_dir.is_dir():
                continue
            for path in sorted(seed_dir.glob("mask*.pgm")):
                file_match = _MASK_FILE.match(path.name)
                if not file_match:
                    continue
                sidecar = path.with_suffix(".inrw")
                values = load_mask(sidecar if sidecar.is_file() else path)
                provenance = Provenance("inr", int(seed_match.group(1)), int(file_match.group(1) or 0))
                found.setdefault(image_dir.name, []).append(AttributionMask(values, 0.0, provenance))
    return found


@CommandRegistry.register
class EvaluateCommand(Command):
    """Score masks against reference segmentations with matching file stems."""

    name = "evaluate"
    help = "Compute precision and hit rate of masks against segmentations."

    def add_arguments(self, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("masks", type=Path, help="Directory of masks (attribute output or flat saliency PGMs).")
        parser.add_argument("segmentations", type=Path, help="Directory of <stem>.pgm segmentations.")
        parser.add_argument("--report", type=Path, help="Report path (default: <out>/evaluation.jsonl).")

    def run(self, args: argparse.Namespace, config: RunConfig) -> int:
        for directory in (args.masks, args.segmentations):
            if not directory.is_dir():
                raise FileNotFoundError(f"Not a directory: {directory}")
        masks = collect_masks(args.masks, config.cutoff)
        segmentations = {path.stem: path for path in sorted(args.segmentations.glob("*.pgm"))}

        missing = sorted(set(masks) - set(segmentations))
        unused = sorted(set(segmentations) - set(masks))
        if missing:
            logger.warning("No segmentation for: %s", ", ".join(missing))
        if unused:
            logger.warning("No masks for: %s", ", ".join(unused))
        matched = sorted(set(masks) & set(segmentations))
        if not matched:
            raise EmptyInputError(f"No mask stems in {args.masks} match segmentations in {args.segmentations}")

        records = []
        with Progress(
            SpinnerColumn(), TextColumn("[progress.description]{task.description}"), transient=True, console=console
        ) as progress:
            task_id = progress.add_task("Scoring masks...", total=None)
            for stem in matched:
                progress.update(task_id, description=f"Scoring {stem}...")
                segmentation = ReferenceSegmentation(load_binary_map(segmentations[stem]))
                method = masks[stem][0].provenance.method
                records.append(
                    aggregate_seeds(
                        masks[stem], segmentation, stem, method, config.binarize_threshold, config.soft_precision
                    )
                )
        summary = corpus_summary(records)
        report = args.report or Path(config.out_dir) / "evaluation.jsonl"
        write_jsonl(report, [r.to_dict() for r in records] + [{"summary": summary}])

        table = Table(title="Evaluation")
        for column in ("image", "seeds", "mean precision", "std", "hit rate"):
            table.add_column(column)
        for record in records:
            table.add_row(
                record.image_id,
                str(len(record.seeds)),
                fmt(record.mean_precision),
                fmt(record.precision_std),
                fmt(record.hit_rate, 2),
            )
        console.print(table)
        console.print(
            Panel(
                f"{summary['images']} images, mean precision {summary['mean_precision']:.4f}, "
                f"hit rate {summary['hit_rate']:.4f}\nReport: {report}",
                title="[bold green]Summary[/bold green]",
                border_style="green",
            )
        )
        return 0
