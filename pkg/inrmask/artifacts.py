"""Files written by the commands: masks, overlays, provenance and JSON-lines reports."""
from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Union

import numpy as np

from .attribution import AttributionMask, compose_perturbed
from .errors import NetpbmError
from .models import ImagePair
from .netpbm import read_netpbm, save_image, to_bytes, write_pgm
from .weights import load_weights, save_weights

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def write_mask(path: PathLike, mask: Union[AttributionMask, np.ndarray]) -> Path:
    values = getattr(mask, "values", mask)
    return write_pgm(path, to_bytes(values))


def write_mask_values(path: PathLike, mask: AttributionMask) -> Path:
    """Full-precision sidecar of a mask in the weight container."""
    return save_weights(path, {"mask": mask.values})


def load_mask(path: PathLike) -> np.ndarray:
    """Mask values in [0,1] from a PGM or a ``.inrw`` sidecar."""
    path = Path(path)
    if path.suffix == ".inrw":
        return load_weights(path)["mask"]
    values, maxval = read_netpbm(path)
    if values.ndim != 2:
        raise NetpbmError(f"{path}: a mask must be a single-channel PGM")
    return values.astype(np.float32) / np.float32(maxval)


def write_overlay(path: PathLike, mask: AttributionMask, pair: ImagePair) -> Path:
    """Preview of the mask as the composition it was scored on."""
    return save_image(path, compose_perturbed(mask.values, pair).data)


def write_json(path: PathLike, payload: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def write_jsonl(path: PathLike, records: Iterable[Dict]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines: List[str] = [json.dumps(record, sort_keys=True) for record in records]
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    logger.debug("Wrote %d report lines to %s", len(lines), path)
    return path


def read_jsonl(path: PathLike) -> List[Dict]:
    text = Path(path).read_text(encoding="utf-8")
    return [json.loads(line) for line in text.splitlines() if line.strip()]
