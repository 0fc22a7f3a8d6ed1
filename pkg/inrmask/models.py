"""Classifiers under explanation, the perturbation generator and the image pair."""
from __future__ import annotations

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from tqdm import tqdm

from .errors import DivergenceError, EmptyInputError, NonFiniteError, ShapeError
from .optim import Adam
from .tensor import (
    Tape,
    Tensor,
    affine,
    clamp,
    concat,
    conv2d,
    elementwise,
    global_avg_pool,
    log,
    pad_reflect,
    relu,
    reshape,
    softmax,
    take,
    tsum,
)
from .weights import load_weights, save_weights

logger = logging.getLogger(__name__)


class Classifier(ABC):
    """Differentiable model Φ mapping a c×h×w image to class probabilities."""

    num_classes: int = 2

    @abstractmethod
    def forward(self, image: Tensor) -> Tensor:
        """Post-softmax probability vector; differentiable in ``image``."""

    def probabilities(self, image: np.ndarray) -> np.ndarray:
        return self.forward(Tensor(image)).data

    def predict(self, image: np.ndarray) -> int:
        return int(np.argmax(self.probabilities(image)))

    def input_gradient(self, image: np.ndarray, class_index: int) -> np.ndarray:
        x = Tensor(np.asarray(image), requires_grad=True)
        with Tape() as tape:
            prob = take(self.forward(x), class_index)
        tape.backward(prob)
        return x.grad if x.grad is not None else np.zeros_like(x.data)


# ---------------------------------------------------------------------------
# Oracle classifier
# ---------------------------------------------------------------------------

class OracleClassifier(Classifier):
    """
    Two-class test double whose evidence is the mean intensity inside known regions.

    With one region the class-1 logit is ``β·(mean_R(I) − θ)``. With several
    regions the evidence is a log-sum-exp smooth maximum of the region means, so
    any single region can carry the prediction on its own.
    """

    num_classes = 2
    target_class = 1

    def __init__(
        self,
        regions: Union[np.ndarray, Sequence[np.ndarray]],
        steepness: float = 20.0,
        threshold: float = 0.5,
        sharpness: float = 50.0,
    ):
        if isinstance(regions, np.ndarray) and regions.ndim == 2:
            regions = [regions]
        self.regions: List[np.ndarray] = [np.asarray(r, dtype=bool) for r in regions]
        if not self.regions:
            raise EmptyInputError("Oracle classifier needs at least one region")
        for region in self.regions:
            if not region.any():
                raise EmptyInputError("Oracle classifier region is empty")
            if region.shape != self.regions[0].shape:
                raise ShapeError("Oracle regions must share one shape")
        self.steepness = steepness
        self.threshold = threshold
        self.sharpness = sharpness

    @property
    def support(self) -> np.ndarray:
        return np.logical_or.reduce(self.regions)

    def _region_means(self, image: Tensor) -> List[Tensor]:
        channels = image.shape[0]
        if image.shape[1:] != self.regions[0].shape:
            raise ShapeError(f"Image {image.shape} does not match oracle region {self.regions[0].shape}")
        means = []
        for region in self.regions:
            weights = np.broadcast_to(region, image.shape).astype(image.dtype) / (channels * region.sum())
            means.append(tsum(image * Tensor(weights, dtype=image.dtype)))
        return means

    def evidence(self, image: Tensor) -> Tensor:
        means = self._region_means(image)
        if len(means) == 1:
            return means[0]
        stacked = concat([reshape(m, (1,)) for m in means])
        k = self.sharpness
        return log(tsum(elementwise("exp", stacked * k))) * (1.0 / k)

    def forward(self, image: Tensor) -> Tensor:
        logit = (self.evidence(image) - self.threshold) * self.steepness
        logits = concat([reshape(-logit, (1,)), reshape(logit, (1,))])
        return softmax(logits)

    @classmethod
    def calibrated(
        cls,
        regions: Union[np.ndarray, Sequence[np.ndarray]],
        image: np.ndarray,
        perturbed: np.ndarray,
        confidence: float = 0.95,
        sharpness: float = 50.0,
    ) -> "OracleClassifier":
        """θ midway between the evidence of I and I′, β so that Φ(I) = ``confidence``."""
        unit = cls(regions, sharpness=sharpness)
        high = unit.evidence(Tensor(image)).item()
        low = unit.evidence(Tensor(perturbed)).item()
        if high <= low:
            raise ValueError(f"Perturbation does not reduce the oracle evidence ({high:.4f} <= {low:.4f})")
        steepness = math.log(confidence / (1 - confidence)) / (high - low)
        return cls(regions, steepness=steepness, threshold=(high + low) / 2, sharpness=sharpness)


def oracle_forward(clf: OracleClassifier, image: Union[np.ndarray, Tensor]) -> Tensor:
    return clf.forward(image if isinstance(image, Tensor) else Tensor(image))


# ---------------------------------------------------------------------------
# Toy CNN
# ---------------------------------------------------------------------------

class ToyCnn(Classifier):
    """conv(8,3×3)-ReLU → conv(16,3×3)-ReLU → global average pool → dense → softmax."""

    def __init__(self, channels: int = 3, num_classes: int = 2, seed: int = 0):
        if num_classes < 2:
            raise ValueError("ToyCnn needs at least two classes")
        rng = np.random.default_rng(seed)
        self.num_classes = num_classes
        self.channels = channels

        def he(shape, fan_in):
            return Tensor(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape).astype(np.float32), requires_grad=True)

        self.conv1 = he((8, channels, 3, 3), channels * 9)
        self.conv2 = he((16, 8, 3, 3), 8 * 9)
        self.dense_w = he((16, num_classes), 16)
        self.dense_b = Tensor(np.zeros(num_classes, dtype=np.float32), requires_grad=True)

    def parameters(self) -> List[Tensor]:
        return [self.conv1, self.conv2, self.dense_w, self.dense_b]

    def freeze(self) -> "ToyCnn":
        """Stop recording gradients for the weights; explanations only differentiate the input."""
        for tensor in self.parameters():
            tensor.requires_grad = False
            tensor.grad = None
        return self

    def forward(self, image: Tensor) -> Tensor:
        if image.ndim != 3 or image.shape[0] != self.channels:
            raise ShapeError(f"ToyCnn expects {self.channels}×h×w input, got {image.shape}")
        h = relu(conv2d(image, self.conv1, padding="same"))
        h = relu(conv2d(h, self.conv2, padding="same"))
        pooled = reshape(global_avg_pool(h), (1, 16))
        return softmax(reshape(affine(pooled, self.dense_w, self.dense_b), (self.num_classes,)))

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {
            "conv1.weight": self.conv1.data,
            "conv2.weight": self.conv2.data,
            "dense.weight": self.dense_w.data,
            "dense.bias": self.dense_b.data,
        }

    def save(self, path: Union[str, Path]) -> Path:
        return save_weights(path, self.state_dict())

    @classmethod
    def load(cls, path: Union[str, Path]) -> "ToyCnn":
        state = load_weights(path)
        try:
            channels = state["conv1.weight"].shape[1]
            num_classes = state["dense.weight"].shape[1]
            model = cls(channels, num_classes)
            for tensor, key in (
                (model.conv1, "conv1.weight"),
                (model.conv2, "conv2.weight"),
                (model.dense_w, "dense.weight"),
                (model.dense_b, "dense.bias"),
            ):
                if state[key].shape != tensor.shape:
                    raise ShapeError(f"{key}: stored shape {state[key].shape} != expected {tensor.shape}")
                tensor.data = state[key]
        except KeyError as e:
            raise ShapeError(f"{path} is not a ToyCnn weight file (missing {e})") from None
        return model.freeze()


def accuracy(model: Classifier, images: np.ndarray, labels: np.ndarray) -> float:
    if len(images) == 0:
        raise EmptyInputError("Cannot measure accuracy on an empty split")
    hits = sum(int(model.predict(image) == label) for image, label in zip(images, labels))
    return hits / len(images)


def split_dataset(
    images: np.ndarray, labels: np.ndarray, holdout: float = 0.25, seed: int = 0
) -> Tuple[Tuple[np.ndarray, np.ndarray], Tuple[np.ndarray, np.ndarray]]:
    """Stratified split into (train, held-out)."""
    rng = np.random.default_rng(seed)
    train_idx, test_idx = [], []
    for label in np.unique(labels):
        members = rng.permutation(np.flatnonzero(labels == label))
        cut = max(1, int(round(len(members) * holdout)))
        test_idx.extend(members[:cut])
        train_idx.extend(members[cut:])
    train_idx, test_idx = np.sort(train_idx), np.sort(test_idx)
    return (images[train_idx], labels[train_idx]), (images[test_idx], labels[test_idx])


def train_toy_cnn(
    images: np.ndarray,
    labels: np.ndarray,
    epochs: int = 30,
    seed: int = 0,
    learning_rate: float = 0.01,
    batch_size: int = 16,
    progress: bool = False,
) -> ToyCnn:
    images = np.asarray(images, dtype=np.float32)
    labels = np.asarray(labels, dtype=int)
    classes = np.unique(labels)
    if len(classes) < 2:
        raise EmptyInputError("Training data must contain at least two classes")
    model = ToyCnn(images.shape[1], int(labels.max()) + 1, seed=seed)
    optimizer = Adam(model.parameters(), lr=learning_rate)
    rng = np.random.default_rng([seed, 7])

    for epoch in tqdm(range(epochs), desc="toy cnn", disable=not progress, leave=False):
        order = rng.permutation(len(images))
        epoch_loss = 0.0
        for start in range(0, len(order), batch_size):
            batch = order[start:start + batch_size]
            optimizer.zero_grad()
            try:
                with Tape() as tape:
                    total = None
                    for i in batch:
                        prob = take(model.forward(Tensor(images[i])), int(labels[i]))
                        nll = -log(clamp(prob, 1e-7, 1.0))
                        total = nll if total is None else total + nll
                    loss = total * (1.0 / len(batch))
                tape.backward(loss)
            except NonFiniteError as e:
                raise DivergenceError(epoch, seed, detail=str(e)) from e
            optimizer.step()
            epoch_loss += loss.item() * len(batch)
        logger.debug("toy cnn epoch %d loss %.4f", epoch, epoch_loss / len(images))
    return model.freeze()


# ---------------------------------------------------------------------------
# Perturbations
# ---------------------------------------------------------------------------

def gaussian_kernel1d(sigma: float, radius: Optional[int] = None) -> np.ndarray:
    """Normalized Gaussian taps over ``radius`` (default ceil(3σ))."""
    if sigma <= 0:
        raise ValueError(f"Gaussian sigma must be positive, got {sigma}")
    if radius is None:
        radius = max(1, int(math.ceil(3 * sigma)))
    elif radius < 1:
        raise ValueError(f"Kernel radius must be at least 1, got {radius}")
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-x * x / (2 * sigma * sigma))
    return kernel / kernel.sum()


def gaussian_kernel2d(sigma: float, radius: Optional[int] = None) -> np.ndarray:
    k = gaussian_kernel1d(sigma, radius)
    return np.outer(k, k)


def smooth(image: Tensor, kernel: np.ndarray) -> Tensor:
    """Reflect-padded correlation of every channel of a c×h×w tensor with a 2-D kernel."""
    channels = image.shape[0]
    radius = kernel.shape[0] // 2
    # channel-diagonal kernel: each output channel only sees its own input channel
    weights = np.zeros((channels, channels) + kernel.shape, dtype=image.dtype)
    for c in range(channels):
        weights[c, c] = kernel
    return conv2d(pad_reflect(image, radius), Tensor(weights), padding="valid")


def blur_pixels(image: np.ndarray, sigma_px: float) -> np.ndarray:
    kernel = gaussian_kernel2d(sigma_px)
    out = smooth(Tensor(np.asarray(image, dtype=np.float32)), kernel).data
    return np.clip(out, 0.0, 1.0)


def gaussian_blur(image: np.ndarray, sigma_fraction: float = 0.05) -> np.ndarray:
    """Blur each channel with σ = ``sigma_fraction`` of the longer image side."""
    if sigma_fraction <= 0:
        raise ValueError(f"Blur sigma fraction must be positive, got {sigma_fraction}")
    return blur_pixels(image, sigma_fraction * max(image.shape[-2:]))


@dataclass
class ImagePair:
    """Original image I and its information-removed counterpart I′."""

    original: np.ndarray
    perturbed: np.ndarray

    def __post_init__(self):
        self.original = np.asarray(self.original, dtype=np.float32)
        self.perturbed = np.asarray(self.perturbed, dtype=np.float32)
        if self.original.shape != self.perturbed.shape or self.original.ndim != 3:
            raise ShapeError(f"Image pair shapes differ: {self.original.shape} vs {self.perturbed.shape}")
        for image in (self.original, self.perturbed):
            if image.min() < 0 or image.max() > 1:
                raise ValueError("Image pair values must lie in [0, 1]")

    @property
    def spatial_shape(self) -> Tuple[int, int]:
        return self.original.shape[1], self.original.shape[2]

    @property
    def channels(self) -> int:
        return self.original.shape[0]

    @classmethod
    def build(cls, image: np.ndarray, perturbation: str = "blur", sigma_fraction: float = 0.05) -> "ImagePair":
        if perturbation == "blur":
            perturbed = gaussian_blur(image, sigma_fraction)
        elif perturbation == "black":
            perturbed = np.zeros_like(image, dtype=np.float32)
        else:
            raise ValueError(f"Unknown perturbation '{perturbation}'")
        return cls(image, perturbed)
