"""
Extremal-perturbation attribution with an area-conditioned implicit network.

The network output is smoothed by a radial-basis filter into the mask M_a, the
image is recomposed as M⊗I + (1−M)⊗I′, and training maximizes the classifier's
probability on that composition while a sorted-vector penalty pins the mask area
to a. Sampling a fresh area every epoch makes one network represent the whole
family of masks, which ``extremal_area_search`` then scans for the smallest
sufficient one. ``multi_explain`` repeats training with a Dice penalty against
the masks found so far.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from tqdm import tqdm

from .errors import AreaRangeError, DivergenceError, NonFiniteError, ShapeError
from .evaluation import soft_dice_kernel
from .inr import (
    AREA_MAX,
    AREA_MIN,
    AreaParameter,
    CoordinateGrid,
    ImplicitMaskNetwork,
    NetworkConfig,
    forward_mask,
    init_weights,
)
from .models import Classifier, ImagePair, gaussian_kernel2d, smooth
from .optim import Adam
from .tensor import (
    Tape,
    Tensor,
    as_tensor,
    crop,
    expand_channels,
    mean,
    reshape,
    sigmoid,
    square,
    take,
    upsample_nearest,
    vecsort,
)

logger = logging.getLogger(__name__)

MaskInput = Union[Tensor, np.ndarray]

# Desk-scale schedule. R_a is a mean over pixels, so overshooting the area by Δ
# costs about λ_r·Δ while covering the evidence can gain Φ up to 1; λ_r must
# outweigh that gain for the requested area to hold.
DEFAULT_EPOCHS = 1000
DEFAULT_LEARNING_RATE = 1e-3
DEFAULT_LAMBDA_R = 50.0


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------

@dataclass
class Provenance:
    method: str = "inr"
    seed: int = 0
    iteration: int = 0


@dataclass
class AttributionMask:
    values: np.ndarray
    area: float
    provenance: Provenance = field(default_factory=Provenance)
    insufficient: bool = False

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float32)
        if values.ndim != 2:
            raise ShapeError(f"Attribution mask must be h×w, got {values.shape}")
        self.values = np.clip(values, 0.0, 1.0)

    @property
    def measured_area(self) -> float:
        return float(np.mean(self.values, dtype=np.float64))

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape


@dataclass
class LossWeights:
    lambda_r: float = DEFAULT_LAMBDA_R
    lambda_d: float = 1.0

    def __post_init__(self):
        if self.lambda_r < 0 or self.lambda_d < 0:
            raise ValueError(f"Loss weights must be non-negative, got {self}")


@dataclass
class TrainConfig:
    epochs: int = DEFAULT_EPOCHS
    learning_rate: float = DEFAULT_LEARNING_RATE
    seed: int = 0
    # apply the area penalty after the RBF filter (True) or to the raw network output
    regularize_filtered: bool = True
    log_every: int = 100
    progress: bool = False

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be at least 1, got {self.epochs}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")


@dataclass
class AreaSearchConfig:
    area_grid: Tuple[float, ...] = (0.025, 0.05, 0.1, 0.2)
    phi0_rel: float = 0.9
    phi0: Optional[float] = None
    a_min: float = AREA_MIN
    a_max: float = AREA_MAX

    def __post_init__(self):
        self.area_grid = tuple(float(a) for a in self.area_grid)
        if not self.area_grid:
            raise ValueError("Area grid is empty")
        if any(b <= a for a, b in zip(self.area_grid, self.area_grid[1:])):
            raise ValueError(f"Area grid must be strictly increasing: {self.area_grid}")
        if self.area_grid[0] < self.a_min - 1e-9 or self.area_grid[-1] > self.a_max + 1e-9:
            raise AreaRangeError(f"Area grid {self.area_grid} leaves [{self.a_min}, {self.a_max}]")

    def threshold(self, phi_original: float) -> float:
        """Φ₀: absolute when ``phi0`` is set, otherwise ``phi0_rel``·Φ(I)."""
        return self.phi0 if self.phi0 is not None else self.phi0_rel * phi_original


class RbfFilter:
    """
    Normalized Gaussian radial-basis kernel.

    The kernel radius is ``ceil(radius_fraction · longer side)`` pixels and the
    Gaussian σ is a third of it, so the taps reach three standard deviations.
    """

    def __init__(self, shape: Tuple[int, int], radius_fraction: float = 0.05):
        if radius_fraction <= 0:
            raise ValueError(f"Filter radius fraction must be positive, got {radius_fraction}")
        self.shape = tuple(shape)
        self.radius_fraction = radius_fraction
        self.radius = max(1, int(math.ceil(radius_fraction * max(self.shape) - 1e-9)))
        self.sigma = self.radius / 3.0
        if self.radius >= min(self.shape):
            raise ShapeError(f"RBF kernel radius {self.radius} does not fit the {self.shape} image")
        self.kernel = gaussian_kernel2d(self.sigma, self.radius)

    def __call__(self, raw: MaskInput) -> Tensor:
        raw = as_tensor(raw)
        if raw.shape != self.shape:
            raise ShapeError(f"Filter built for {self.shape}, got mask {raw.shape}")
        out = smooth(reshape(raw, (1,) + self.shape), self.kernel)
        return reshape(out, self.shape)


@dataclass
class ExplainConfig:
    """Everything one explanation run needs besides the image and the classifier."""

    train: TrainConfig = field(default_factory=TrainConfig)
    weights: LossWeights = field(default_factory=LossWeights)
    search: AreaSearchConfig = field(default_factory=AreaSearchConfig)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    filter_radius_frac: float = 0.05
    baseline_divisor: int = 8
    baseline_learning_rate: float = 0.05
    target_class: Optional[int] = None


@dataclass
class AreaSearchResult:
    area: float
    mask: AttributionMask
    insufficient: bool
    phi_original: float
    phi_masked: float
    threshold: float
    phi_by_area: Dict[float, float] = field(default_factory=dict)

    def provenance(self) -> Dict:
        prov = self.mask.provenance
        return {
            "method": prov.method,
            "seed": prov.seed,
            "iteration": prov.iteration,
            "a": self.area,
            "measured_area": self.mask.measured_area,
            "phi_original": self.phi_original,
            "phi_masked": self.phi_masked,
            "phi0": self.threshold,
            "insufficient": self.insufficient,
        }


# ---------------------------------------------------------------------------
# Loss terms
# ---------------------------------------------------------------------------

def compose_perturbed(mask: MaskInput, pair: ImagePair) -> Tensor:
    """Î = M⊗I + (1−M)⊗I′ with the mask shared by every channel."""
    mask = as_tensor(mask)
    if mask.shape != pair.spatial_shape:
        raise ShapeError(f"Mask {mask.shape} does not match image {pair.spatial_shape}")
    m = expand_channels(mask, pair.channels)
    original = Tensor(pair.original, dtype=mask.dtype)
    perturbed = Tensor(pair.perturbed, dtype=mask.dtype)
    return m * original + (1.0 - m) * perturbed


def reference_vector(size: int, area: float, dtype=np.float32) -> np.ndarray:
    """floor((1−a)·n) zeros followed by ones."""
    zeros = int(math.floor((1.0 - area) * size + 1e-9))
    r = np.ones(size, dtype=dtype)
    r[:zeros] = 0
    return r


def area_regularizer(mask: MaskInput, area: float) -> Tensor:
    """Mean squared gap between the sorted mask values and the reference vector."""
    if not 0.0 <= area <= 1.0:
        raise AreaRangeError(f"Area {area} outside [0, 1]")
    mask = as_tensor(mask)
    flat, _ = vecsort(reshape(mask, (mask.size,)))
    target = Tensor(reference_vector(mask.size, area, mask.dtype))
    return mean(square(flat - target))


def rbf_smooth(raw_mask: MaskInput, rbf: RbfFilter) -> Tensor:
    return rbf(raw_mask)


def resolve_target(clf: Classifier, pair: ImagePair, target_class: Optional[int] = None) -> int:
    if target_class is not None and target_class >= 0:
        return int(target_class)
    fixed = getattr(clf, "target_class", None)
    if fixed is not None:
        return int(fixed)
    return clf.predict(pair.original)


def class_probability(clf: Classifier, image: Union[Tensor, np.ndarray], target: int) -> Tensor:
    return take(clf.forward(as_tensor(image)), target)


def objective(
    raw_mask: Tensor,
    pair: ImagePair,
    clf: Classifier,
    area: float,
    weights: LossWeights,
    rbf: RbfFilter,
    target: int,
    baseline_mask: Optional[np.ndarray] = None,
    regularize_filtered: bool = True,
) -> Tuple[Tensor, Tensor]:
    """Extremal loss, plus the Dice penalty when a baseline mask is given. Returns (loss, M_a)."""
    filtered = rbf(raw_mask)
    phi = class_probability(clf, compose_perturbed(filtered, pair), target)
    loss = -phi
    if weights.lambda_r > 0:
        regularized = filtered if regularize_filtered else raw_mask
        loss = loss + area_regularizer(regularized, area) * weights.lambda_r
    if baseline_mask is not None and weights.lambda_d > 0:
        baseline = Tensor(np.asarray(baseline_mask, dtype=filtered.dtype))
        loss = loss + soft_dice_kernel(filtered, baseline) * weights.lambda_d
    return loss, filtered


def loss_extremal(
    net: ImplicitMaskNetwork,
    pair: ImagePair,
    clf: Classifier,
    area: AreaParameter,
    weights: LossWeights,
    *,
    rbf: Optional[RbfFilter] = None,
    grid: Optional[CoordinateGrid] = None,
    target_class: Optional[int] = None,
    baseline_mask: Optional[np.ndarray] = None,
    regularize_filtered: bool = True,
) -> Tensor:
    """−Φ(Î) + λ_r·R_a(M_a) for the network's mask at ``area`` (+ λ_d·Dice with a baseline)."""
    grid = grid or CoordinateGrid(*pair.spatial_shape)
    rbf = rbf or RbfFilter(pair.spatial_shape)
    target = resolve_target(clf, pair, target_class)
    raw = forward_mask(net, grid, area)
    loss, _ = objective(raw, pair, clf, area.raw, weights, rbf, target, baseline_mask, regularize_filtered)
    if not math.isfinite(loss.item()):
        raise NonFiniteError("Extremal loss is not finite")
    return loss


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

def _optimize(
    params: List[Tensor],
    step_loss,
    epochs: int,
    learning_rate: float,
    seed: int,
    iteration: Optional[int],
    log_every: int,
    progress: bool,
    label: str,
) -> List[float]:
    optimizer = Adam(params, lr=learning_rate, betas=(0.9, 0.999), eps=1e-8)
    history: List[float] = []
    for epoch in tqdm(range(epochs), desc=label, disable=not progress, leave=False):
        optimizer.zero_grad()
        try:
            with Tape() as tape:
                loss = step_loss(epoch)
            value = loss.item()
            if not math.isfinite(value):
                raise NonFiniteError("loss is not finite")
            tape.backward(loss)
        except NonFiniteError as e:
            raise DivergenceError(epoch, seed, iteration, str(e)) from e
        optimizer.step()
        history.append(value)
        if log_every and epoch % log_every == 0:
            logger.debug("%s seed=%d epoch=%d loss=%.5f", label, seed, epoch, value)
    return history


def train_inr(
    pair: ImagePair,
    clf: Classifier,
    config: TrainConfig,
    weights: LossWeights,
    baseline_mask: Optional[np.ndarray] = None,
    *,
    network: Optional[NetworkConfig] = None,
    rbf: Optional[RbfFilter] = None,
    target_class: Optional[int] = None,
    iteration: Optional[int] = None,
) -> ImplicitMaskNetwork:
    """
    Fit a fresh network; every epoch uses the full pixel batch and one area a ~ U[0,1] (scaled).

    With ``baseline_mask`` the objective gains λ_d·Dice(M_a, M^b).
    """
    network = network or NetworkConfig()
    grid = CoordinateGrid(*pair.spatial_shape)
    rbf = rbf or RbfFilter(pair.spatial_shape)
    target = resolve_target(clf, pair, target_class)
    if baseline_mask is not None and np.shape(baseline_mask) != pair.spatial_shape:
        raise ShapeError(f"Baseline mask {np.shape(baseline_mask)} does not match image {pair.spatial_shape}")

    net = init_weights(config.seed, network)
    rng = np.random.default_rng([config.seed, 2])
    logger.info(
        "Training mask network seed=%d epochs=%d%s",
        config.seed,
        config.epochs,
        "" if baseline_mask is None else f" (iteration {iteration}, Dice penalty)",
    )

    def step_loss(epoch: int) -> Tensor:
        area = AreaParameter.from_scaled(float(rng.uniform(0.0, 1.0)), network.a_min, network.a_max)
        raw = forward_mask(net, grid, area)
        loss, _ = objective(
            raw, pair, clf, area.raw, weights, rbf, target, baseline_mask, config.regularize_filtered
        )
        return loss

    net.history = _optimize(
        net.parameters(),
        step_loss,
        config.epochs,
        config.learning_rate,
        config.seed,
        iteration,
        config.log_every,
        config.progress,
        "inr",
    )
    logger.info("Finished seed=%d final loss %.5f", config.seed, net.history[-1])
    return net


def extract_mask(
    net: ImplicitMaskNetwork,
    grid: CoordinateGrid,
    area: float,
    rbf: RbfFilter,
    iteration: int = 0,
) -> AttributionMask:
    parameter = net.area(area)
    values = rbf(forward_mask(net, grid, parameter)).data
    return AttributionMask(values, parameter.raw, Provenance("inr", net.seed, iteration))


def area_sweep(
    net: ImplicitMaskNetwork, grid: CoordinateGrid, areas: Sequence[float], rbf: RbfFilter
) -> List[AttributionMask]:
    return [extract_mask(net, grid, a, rbf) for a in areas]


def phi_value(clf: Classifier, image: np.ndarray, target: int) -> float:
    return float(clf.probabilities(image)[target])


def search_masks(
    masks: Sequence[AttributionMask],
    pair: ImagePair,
    clf: Classifier,
    search: AreaSearchConfig,
    target: int,
) -> AreaSearchResult:
    """Pick the smallest-area mask whose preserved region keeps Φ at or above Φ₀."""
    phi_original = phi_value(clf, pair.original, target)
    threshold = search.threshold(phi_original)
    phi_by_area: Dict[float, float] = {}
    for mask in masks:
        composed = compose_perturbed(mask.values, pair).data
        phi = phi_value(clf, composed, target)
        phi_by_area[mask.area] = phi
        if phi >= threshold:
            return AreaSearchResult(mask.area, mask, False, phi_original, phi, threshold, phi_by_area)
    largest = masks[-1]
    largest.insufficient = True
    logger.warning(
        "No area in %s reaches Φ₀=%.4f (best Φ=%.4f); keeping the largest mask",
        [m.area for m in masks],
        threshold,
        max(phi_by_area.values()),
    )
    return AreaSearchResult(largest.area, largest, True, phi_original, phi_by_area[largest.area], threshold, phi_by_area)


def extremal_area_search(
    net: ImplicitMaskNetwork,
    pair: ImagePair,
    clf: Classifier,
    search: AreaSearchConfig,
    rbf: Optional[RbfFilter] = None,
    *,
    target_class: Optional[int] = None,
    iteration: int = 0,
) -> AreaSearchResult:
    grid = CoordinateGrid(*pair.spatial_shape)
    rbf = rbf or RbfFilter(pair.spatial_shape)
    target = resolve_target(clf, pair, target_class)
    masks = [extract_mask(net, grid, a, rbf, iteration) for a in search.area_grid]
    return search_masks(masks, pair, clf, search, target)


# ---------------------------------------------------------------------------
# Direct (non-INR) baseline
# ---------------------------------------------------------------------------

def baseline_extremal(
    pair: ImagePair,
    clf: Classifier,
    area: float,
    config: TrainConfig,
    weights: Optional[LossWeights] = None,
    *,
    rbf: Optional[RbfFilter] = None,
    divisor: int = 8,
    learning_rate: Optional[float] = None,
    target_class: Optional[int] = None,
) -> AttributionMask:
    """
    Optimize a sigmoid-squashed mask grid at 1/``divisor`` resolution for one area.

    The grid is upsampled to the image, passed through the same RBF filter and
    trained on the same extremal loss. Each area is an independent run with its
    own initialization drawn from the seed and the area.
    """
    weights = weights or LossWeights()
    height, width = pair.spatial_shape
    rbf = rbf or RbfFilter(pair.spatial_shape)
    target = resolve_target(clf, pair, target_class)
    rng = np.random.default_rng([config.seed, 3, int(round(area * 1e6))])
    grid_shape = (math.ceil(height / divisor), math.ceil(width / divisor))
    logits = Tensor(rng.normal(0.0, 0.01, size=grid_shape).astype(np.float32), requires_grad=True)

    def raw_mask() -> Tensor:
        return crop(upsample_nearest(sigmoid(logits), divisor), height, width)

    def step_loss(epoch: int) -> Tensor:
        loss, _ = objective(raw_mask(), pair, clf, area, weights, rbf, target, None, config.regularize_filtered)
        return loss

    _optimize(
        [logits],
        step_loss,
        config.epochs,
        learning_rate or config.learning_rate,
        config.seed,
        None,
        config.log_every,
        config.progress,
        f"baseline a={area}",
    )
    return AttributionMask(rbf(raw_mask()).data, area, Provenance("baseline", config.seed, 0))


# ---------------------------------------------------------------------------
# Multiple explanations
# ---------------------------------------------------------------------------

def explain(
    pair: ImagePair,
    clf: Classifier,
    config: ExplainConfig,
    *,
    baseline_mask: Optional[np.ndarray] = None,
    iteration: int = 0,
) -> Tuple[ImplicitMaskNetwork, AreaSearchResult]:
    """Train one network and run the extremal area search on it."""
    rbf = RbfFilter(pair.spatial_shape, config.filter_radius_frac)
    net = train_inr(
        pair,
        clf,
        config.train,
        config.weights,
        baseline_mask,
        network=config.network,
        rbf=rbf,
        target_class=config.target_class,
        iteration=iteration,
    )
    result = extremal_area_search(
        net, pair, clf, config.search, rbf, target_class=config.target_class, iteration=iteration
    )
    return net, result


def multi_explain_results(
    pair: ImagePair,
    clf: Classifier,
    n: int,
    config: ExplainConfig,
    initial: Optional[AreaSearchResult] = None,
) -> List[AreaSearchResult]:
    """Iterations 0..n; iteration k trains from scratch against clamp(Σ_{i<k} M^i, 0, 1)."""
    if n < 0:
        raise ValueError(f"Number of additional explanations must be non-negative, got {n}")
    results = [initial if initial is not None else explain(pair, clf, config)[1]]
    for iteration in range(1, n + 1):
        baseline = np.clip(np.sum([r.mask.values for r in results], axis=0), 0.0, 1.0)
        _, result = explain(pair, clf, config, baseline_mask=baseline, iteration=iteration)
        results.append(result)
    return results


def multi_explain(
    pair: ImagePair,
    clf: Classifier,
    n: int,
    config: ExplainConfig,
    initial: Optional[AreaSearchResult] = None,
) -> List[AttributionMask]:
    return [r.mask for r in multi_explain_results(pair, clf, n, config, initial)]
