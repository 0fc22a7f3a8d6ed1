"""
Synthetic planted-shape scenes with exact ground-truth regions.

Every class but the last plants one coloured shape on a textured background.
The last class is the two-evidence class: an object and a correlated context
bar in opposite halves of the image, either of which identifies the label.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Tuple, Union

import numpy as np

from .errors import EmptyInputError, ShapeError
from .netpbm import load_binary_map, load_image, save_image, write_pgm

logger = logging.getLogger(__name__)

PALETTE: List[Tuple[float, float, float]] = [
    (0.90, 0.15, 0.15),
    (0.15, 0.80, 0.20),
    (0.20, 0.30, 0.95),
    (0.95, 0.85, 0.10),
    (0.80, 0.20, 0.80),
    (0.10, 0.85, 0.85),
]
CONTEXT_COLOR = (0.97, 0.97, 0.97)
SHAPES = ("square", "disk", "triangle")
MIN_SIZE = 32
MANIFEST = "manifest.json"


@dataclass
class SyntheticScene:
    scene_id: str
    image: np.ndarray  # h×w×3 floats in [0,1]
    label: int
    regions: List[np.ndarray] = field(default_factory=list)
    region_labels: List[str] = field(default_factory=list)

    def __post_init__(self):
        h, w = self.image.shape[:2]
        for region in self.regions:
            if region.shape != (h, w):
                raise ShapeError(f"Region {region.shape} does not fit a {h}x{w} scene")
            if not region.any():
                raise EmptyInputError(f"Scene {self.scene_id} has an empty region")

    @property
    def two_evidence(self) -> bool:
        return len(self.regions) > 1

    @property
    def segmentation(self) -> np.ndarray:
        return np.logical_or.reduce(self.regions)

    @property
    def channels_first(self) -> np.ndarray:
        return np.ascontiguousarray(self.image.transpose(2, 0, 1), dtype=np.float32)


def region_box(region: np.ndarray) -> List[int]:
    """(row0, col0, row1, col1) of the nonzero pixels, end-exclusive."""
    rows = np.flatnonzero(region.any(axis=1))
    cols = np.flatnonzero(region.any(axis=0))
    return [int(rows[0]), int(cols[0]), int(rows[-1]) + 1, int(cols[-1]) + 1]


def _background(rng: np.random.Generator, size: int) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size] / size
    fx, fy = rng.uniform(1.0, 4.0, size=2)
    phase = rng.uniform(0, 2 * np.pi)
    grey = 0.4 + 0.06 * np.sin(2 * np.pi * (fx * xx + fy * yy) + phase)
    tint = rng.uniform(-0.03, 0.03, size=3)
    noise = rng.normal(0.0, 0.025, size=(size, size, 3))
    return np.clip(grey[..., None] + tint + noise, 0.0, 1.0)


def _shape_mask(shape: str, size: int, top: int, left: int, extent: int) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size]
    if shape == "square":
        return (yy >= top) & (yy < top + extent) & (xx >= left) & (xx < left + extent)
    if shape == "disk":
        r = extent / 2
        return (yy + 0.5 - top - r) ** 2 + (xx + 0.5 - left - r) ** 2 <= r * r
    if shape == "triangle":
        # apex at the top centre, base on the bottom edge of the box
        dy = yy - top
        half = dy * 0.5
        centre = left + extent / 2
        return (dy >= 0) & (dy < extent) & (np.abs(xx + 0.5 - centre) <= half + 0.5)
    raise ValueError(f"Unknown shape '{shape}'")


def _paint(image: np.ndarray, region: np.ndarray, color: Tuple[float, float, float], rng: np.random.Generator) -> None:
    shade = np.asarray(color) + rng.normal(0.0, 0.02, size=(int(region.sum()), 3))
    image[region] = np.clip(shade, 0.0, 1.0)


def render_scene(label: int, class_count: int, size: int, rng: np.random.Generator, scene_id: str) -> SyntheticScene:
    image = _background(rng, size)
    two_evidence = label == class_count - 1
    if not two_evidence:
        extent = int(rng.integers(size // 4, size // 3 + 1))
        top, left = (int(v) for v in rng.integers(1, size - extent, size=2))
        shape = SHAPES[label % len(SHAPES)]
        region = _shape_mask(shape, size, top, left, extent)
        _paint(image, region, PALETTE[label], rng)
        return SyntheticScene(scene_id, image, label, [region], [f"{shape}"])

    # object and context occupy opposite halves, so the regions never touch
    half = size // 2
    extent = int(rng.integers(size // 5, size // 4 + 1))
    object_left_side = bool(rng.integers(0, 2))
    span = (1, half - extent - 1)
    top = int(rng.integers(1, size - extent))
    left = int(rng.integers(*span)) + (0 if object_left_side else half)
    obj = _shape_mask("disk", size, top, left, extent)

    bar_height = int(rng.integers(size // 3, size // 2 + 1))
    bar_width = max(3, size // 10)
    bar_top = int(rng.integers(1, size - bar_height))
    bar_left = int(rng.integers(1, half - bar_width - 1)) + (half if object_left_side else 0)
    context = np.zeros((size, size), dtype=bool)
    context[bar_top:bar_top + bar_height, bar_left:bar_left + bar_width] = True

    _paint(image, obj, PALETTE[label], rng)
    _paint(image, context, CONTEXT_COLOR, rng)
    return SyntheticScene(scene_id, image, label, [obj, context], ["object", "context"])


def gen_dataset(
    out_dir: Union[str, Path],
    class_count: int = 3,
    size: int = 64,
    scenes_per_class: int = 20,
    seed: int = 0,
) -> Dict:
    """
    Render and write a dataset; returns the manifest.

    Layout: ``images/<id>.ppm``, ``masks/<id>_r<k>.pgm`` per region,
    ``segmentations/<id>.pgm`` (union of regions) and ``manifest.json``.
    """
    if size < MIN_SIZE:
        raise ShapeError(f"Scene size must be at least {MIN_SIZE}, got {size}")
    if not 2 <= class_count <= len(PALETTE) + 1:
        raise ValueError(f"class_count must lie in [2, {len(PALETTE) + 1}], got {class_count}")
    if scenes_per_class < 1:
        raise EmptyInputError("scenes_per_class must be at least 1")

    out_dir = Path(out_dir)
    entries = []
    for label in range(class_count):
        for index in range(scenes_per_class):
            scene_id = f"c{label}_{index:04d}"
            scene = render_scene(label, class_count, size, np.random.default_rng([seed, label, index]), scene_id)
            entries.append(write_scene(out_dir, scene))
    manifest = {
        "seed": seed,
        "image_size": size,
        "class_count": class_count,
        "two_evidence_class": class_count - 1,
        "scenes": entries,
    }
    (out_dir / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    logger.info("Wrote %d scenes to %s", len(entries), out_dir)
    return manifest


def write_scene(out_dir: Path, scene: SyntheticScene) -> Dict:
    image_path = Path("images") / f"{scene.scene_id}.ppm"
    seg_path = Path("segmentations") / f"{scene.scene_id}.pgm"
    save_image(out_dir / image_path, scene.channels_first)
    write_pgm(out_dir / seg_path, scene.segmentation.astype(np.uint8) * 255)
    regions = []
    for k, (region, name) in enumerate(zip(scene.regions, scene.region_labels)):
        mask_path = Path("masks") / f"{scene.scene_id}_r{k}.pgm"
        write_pgm(out_dir / mask_path, region.astype(np.uint8) * 255)
        regions.append({"mask": mask_path.as_posix(), "label": name, "box": region_box(region)})
    return {
        "id": scene.scene_id,
        "image": image_path.as_posix(),
        "label": scene.label,
        "segmentation": seg_path.as_posix(),
        "regions": regions,
    }


def load_manifest(root: Union[str, Path]) -> Dict:
    path = Path(root) / MANIFEST
    if not path.is_file():
        raise FileNotFoundError(f"No {MANIFEST} in {root}")
    return json.loads(path.read_text(encoding="utf-8"))


def load_dataset(root: Union[str, Path]) -> Tuple[np.ndarray, np.ndarray, Dict]:
    """Channels-first images, integer labels and the manifest of a generated dataset."""
    root = Path(root)
    manifest = load_manifest(root)
    scenes = manifest["scenes"]
    if not scenes:
        raise EmptyInputError(f"{root} holds no scenes")
    images = np.stack([load_image(root / entry["image"]) for entry in scenes])
    labels = np.array([entry["label"] for entry in scenes], dtype=int)
    return images, labels, manifest


def load_regions(root: Union[str, Path], entry: Dict) -> List[np.ndarray]:
    return [load_binary_map(Path(root) / region["mask"]) for region in entry["regions"]]
