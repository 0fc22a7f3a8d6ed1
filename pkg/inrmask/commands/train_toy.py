import argparse
import logging
from pathlib import Path

from rich.panel import Panel
from rich.table import Table

from . import Command, CommandRegistry
from .common import show_progress
from ..config import RunConfig
from ..console import console
from ..dataset import load_dataset
from ..models import accuracy, split_dataset, train_toy_cnn

logger = logging.getLogger(__name__)

TARGET_ACCURACY = 0.95


@CommandRegistry.register
class TrainToyCommand(Command):
    name = "train-toy"
    help = "Train the toy CNN on a generated dataset."

    def add_arguments(self, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("dataset", type=Path, help="Directory written by gen-dataset.")
        parser.add_argument("--holdout", type=float, default=0.25, help="Held-out fraction per class.")
        parser.add_argument("--model-out", type=Path, help="Weight file (default: <out>/toy_cnn.inrw).")

    def run(self, args: argparse.Namespace, config: RunConfig) -> int:
        seed = config.seeds[0]
        images, labels, _ = load_dataset(args.dataset)
        (train_x, train_y), (test_x, test_y) = split_dataset(images, labels, args.holdout, seed)
        model = train_toy_cnn(
            train_x,
            train_y,
            epochs=config.toy_epochs,
            seed=seed,
            learning_rate=config.toy_learning_rate,
            batch_size=config.toy_batch_size,
            progress=show_progress(),
        )
        train_acc = accuracy(model, train_x, train_y)
        test_acc = accuracy(model, test_x, test_y)
        if test_acc < TARGET_ACCURACY:
            logger.warning("Held-out accuracy %.3f is below %.2f", test_acc, TARGET_ACCURACY)
        path = model.save(args.model_out or Path(config.out_dir) / "toy_cnn.inrw")

        table = Table(title="Toy CNN")
        table.add_column("split")
        table.add_column("images")
        table.add_column("accuracy")
        table.add_row("train", str(len(train_y)), f"{train_acc:.4f}")
        table.add_row("held-out", str(len(test_y)), f"{test_acc:.4f}")
        console.print(table)
        console.print(Panel(f"Weights written to {path}", title="[bold green]Done[/bold green]", border_style="green"))
        return 0
