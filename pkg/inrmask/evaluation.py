"""Precision, hit rate, soft Dice, IoU and saliency thresholding."""
from __future__ import annotations

import json
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import EmptyInputError, ShapeError
from .tensor import Tensor, tsum

if TYPE_CHECKING:
    from .attribution import AttributionMask

logger = logging.getLogger(__name__)

DICE_EPS = 1e-6
MaskLike = Union["AttributionMask", np.ndarray]


def _values(mask: MaskLike) -> np.ndarray:
    return np.asarray(getattr(mask, "values", mask), dtype=np.float64)


@dataclass
class ReferenceSegmentation:
    mask: np.ndarray
    source: str = "semantic"

    def __post_init__(self):
        self.mask = np.asarray(self.mask).astype(bool)
        if self.source not in ("semantic", "bounding-box"):
            raise ValueError(f"Unknown segmentation source '{self.source}'")
        if self.mask.ndim != 2:
            raise ShapeError(f"Segmentation must be an h×w map, got {self.mask.shape}")

    @classmethod
    def from_box(cls, shape: Tuple[int, int], box: Sequence[int]) -> "ReferenceSegmentation":
        """Rectangular segmentation from (row0, col0, row1, col1), end-exclusive."""
        r0, c0, r1, c1 = box
        mask = np.zeros(shape, dtype=bool)
        mask[r0:r1, c0:c1] = True
        return cls(mask, "bounding-box")


def binarize(mask: MaskLike, threshold: float = 0.5) -> np.ndarray:
    return _values(mask) > threshold


def precision(
    mask: MaskLike,
    seg: Union[ReferenceSegmentation, np.ndarray],
    binarize_threshold: float = 0.5,
    soft: bool = False,
) -> float:
    """|M ∩ S| / |M|; ``soft`` weights each pixel by its mask value instead of binarizing."""
    values = _values(mask)
    reference = seg.mask if isinstance(seg, ReferenceSegmentation) else np.asarray(seg).astype(bool)
    if values.shape != reference.shape:
        raise ShapeError(f"Mask {values.shape} and segmentation {reference.shape} differ in shape")
    weights = values if soft else (values > binarize_threshold).astype(np.float64)
    total = weights.sum()
    if total == 0:
        logger.warning("Empty mask: precision reported as 0")
        return 0.0
    return float(weights[reference].sum() / total)


def hit_rate(precisions: Sequence[float], level: float = 0.5) -> float:
    """Fraction of precisions strictly above ``level``."""
    if len(precisions) == 0:
        raise EmptyInputError("hit_rate needs at least one precision")
    return sum(1 for p in precisions if p > level) / len(precisions)


def soft_dice_kernel(m1: Tensor, m2: Tensor) -> Tensor:
    """Differentiable (2·Σ m1·m2 + ε) / (Σ m1 + Σ m2 + ε)."""
    if m1.shape != m2.shape:
        raise ShapeError(f"Dice operands differ in shape: {m1.shape} vs {m2.shape}")
    overlap = tsum(m1 * m2) * 2.0 + DICE_EPS
    return overlap / (tsum(m1) + tsum(m2) + DICE_EPS)


def soft_dice(m1: MaskLike, m2: MaskLike) -> float:
    return soft_dice_kernel(Tensor(_values(m1)), Tensor(_values(m2))).item()


def dice_matrix(masks: Sequence[MaskLike]) -> List[List[float]]:
    """Pairwise soft Dice; row i, column j compares masks i and j."""
    return [[soft_dice(a, b) for b in masks] for a in masks]


def iou(m1: MaskLike, m2: MaskLike, threshold: float = 0.5) -> float:
    a, b = binarize(m1, threshold), binarize(m2, threshold)
    if a.shape != b.shape:
        raise ShapeError(f"IoU operands differ in shape: {a.shape} vs {b.shape}")
    union = np.logical_or(a, b).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(a, b).sum() / union)


def threshold_saliency(saliency: np.ndarray, cutoff: float) -> np.ndarray:
    """
    Binary mask of ``saliency > cutoff``.

    Maps with values outside [0,1] are min-max rescaled first. A constant map is
    reported with a warning; when it already lies in [0,1] it is thresholded as
    is, otherwise the result is all zeros.
    """
    if not 0 < cutoff < 1:
        raise ValueError(f"Cut-off must lie in (0, 1), got {cutoff}")
    values = np.asarray(saliency, dtype=np.float64)
    low, high = values.min(), values.max()
    in_range = low >= 0 and high <= 1
    if low == high:
        logger.warning("Constant saliency map (value %g)", low)
        if not in_range:
            return np.zeros(values.shape, dtype=np.uint8)
    elif not in_range:
        values = (values - low) / (high - low)
    return (values > cutoff).astype(np.uint8)


@dataclass
class EvalRecord:
    image_id: str
    method: str
    seeds: List[int]
    precisions: List[float]
    mean_precision: float
    hit_rate: float
    iteration_precisions: List[float] = field(default_factory=list)
    max_precision: Optional[float] = None

    @property
    def hits(self) -> List[bool]:
        return [p > 0.5 for p in self.precisions]

    @property
    def precision_std(self) -> float:
        return float(np.std(self.precisions))

    def to_dict(self) -> Dict:
        return {
            "image_id": self.image_id,
            "method": self.method,
            "seeds": self.seeds,
            "precisions": self.precisions,
            "mean_precision": self.mean_precision,
            "hit_rate": self.hit_rate,
            "iteration_precisions": self.iteration_precisions,
            "max_precision": self.max_precision,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=False)


def aggregate_seeds(
    masks: Sequence["AttributionMask"],
    seg: Union[ReferenceSegmentation, np.ndarray],
    image_id: str = "",
    method: str = "inr",
    binarize_threshold: float = 0.5,
    soft: bool = False,
) -> EvalRecord:
    """
    Summarize the masks produced for one image.

    Masks are grouped by the seed and iteration in their provenance. The per-seed
    precision is taken from each seed's earliest iteration; with several
    iterations the record also carries the mean precision per iteration and the
    seed-averaged maximum over iterations.
    """
    if not masks:
        raise EmptyInputError("aggregate_seeds needs at least one mask")
    by_seed: Dict[int, Dict[int, float]] = defaultdict(dict)
    for mask in masks:
        provenance = mask.provenance
        by_seed[provenance.seed][provenance.iteration] = precision(mask, seg, binarize_threshold, soft)

    seeds = sorted(by_seed)
    precisions = [by_seed[s][min(by_seed[s])] for s in seeds]
    iterations = sorted({i for per_seed in by_seed.values() for i in per_seed})
    record = EvalRecord(
        image_id=image_id,
        method=method,
        seeds=seeds,
        precisions=precisions,
        mean_precision=float(np.mean(precisions)),
        hit_rate=hit_rate(precisions),
    )
    if len(iterations) > 1:
        record.iteration_precisions = [
            float(np.mean([by_seed[s][i] for s in seeds if i in by_seed[s]])) for i in iterations
        ]
        record.max_precision = float(np.mean([max(by_seed[s].values()) for s in seeds]))
    return record


def corpus_summary(records: Sequence[EvalRecord]) -> Dict:
    """Mean precision and pooled hit rate over every record."""
    if not records:
        return {"images": 0, "mean_precision": 0.0, "hit_rate": 0.0}
    pooled = [p for record in records for p in record.precisions]
    return {
        "images": len(records),
        "mean_precision": float(np.mean([r.mean_precision for r in records])),
        "hit_rate": hit_rate(pooled),
    }
