import logging
from typing import Optional

from rich.console import Console
from rich.logging import RichHandler

console = Console()
error_console = Console(stderr=True)

_LEVELS = {0: logging.WARNING, 1: logging.INFO}


def setup_logging(verbosity: int = 0, target: Optional[Console] = None) -> logging.Logger:
    """Route the package logger through a single RichHandler."""
    logger = logging.getLogger("inrmask")
    logger.setLevel(_LEVELS.get(verbosity, logging.DEBUG))
    for handler in list(logger.handlers):
        if isinstance(handler, RichHandler):
            logger.removeHandler(handler)
    handler = RichHandler(console=target or error_console, show_path=False, markup=False)
    handler.setFormatter(logging.Formatter("%(message)s"))
    logger.addHandler(handler)
    return logger
