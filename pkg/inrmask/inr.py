"""
Area-conditioned coordinate network producing attribution masks.

Each pixel coordinate is joined with the scaled area value, lifted through a fixed
Fourier feature map and passed through a ReLU MLP with a single sigmoid output.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Tuple, Union

import numpy as np

from .errors import AreaRangeError, ShapeError
from .tensor import Tensor, affine, relu, reshape, sigmoid

logger = logging.getLogger(__name__)

AREA_MIN = 0.025
AREA_MAX = 0.2


class CoordinateGrid:
    """Pixel centres of an h×w image mapped to [0,1]², row-major."""

    def __init__(self, height: int, width: int):
        if height < 1 or width < 1:
            raise ShapeError(f"Coordinate grid needs a non-empty shape, got {height}x{width}")
        self.height = height
        self.width = width
        rows = np.linspace(0.0, 1.0, height) if height > 1 else np.zeros(1)
        cols = np.linspace(0.0, 1.0, width) if width > 1 else np.zeros(1)
        yy, xx = np.meshgrid(rows, cols, indexing="ij")
        # (x1, x2) = (column, row)
        self.coords = np.stack([xx.reshape(-1), yy.reshape(-1)], axis=1).astype(np.float32)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.height, self.width

    def __len__(self) -> int:
        return self.height * self.width


@dataclass(frozen=True)
class AreaParameter:
    """A raw mask area and its [0,1]-scaled counterpart fed to the network."""

    raw: float
    a_min: float = AREA_MIN
    a_max: float = AREA_MAX

    def __post_init__(self):
        if not self.a_min < self.a_max:
            raise AreaRangeError(f"Area range [{self.a_min}, {self.a_max}] is empty")
        if not self.a_min - 1e-9 <= self.raw <= self.a_max + 1e-9:
            raise AreaRangeError(f"Area {self.raw} outside [{self.a_min}, {self.a_max}]")

    @property
    def scaled(self) -> float:
        return (self.raw - self.a_min) / (self.a_max - self.a_min)

    @classmethod
    def from_scaled(cls, scaled: float, a_min: float = AREA_MIN, a_max: float = AREA_MAX) -> "AreaParameter":
        if not 0.0 <= scaled <= 1.0:
            raise AreaRangeError(f"Scaled area {scaled} outside [0, 1]")
        return cls(a_min + scaled * (a_max - a_min), a_min, a_max)


class FourierEncoder:
    """
    Fixed sinusoidal lifting of (x1, x2, scaled area).

    ``mode="gaussian"`` draws ``component_count`` frequency rows from
    N(0, frequency_count²); ``mode="axis"`` uses the powers 2^0..2^(F-1) along each
    input axis, so its component count is ``input_dim * frequency_count``.
    """

    def __init__(
        self,
        frequency_count: int = 6,
        component_count: int = 128,
        seed: int = 0,
        mode: str = "gaussian",
        input_dim: int = 3,
    ):
        self.frequency_count = frequency_count
        self.input_dim = input_dim
        self.mode = mode
        self.seed = seed
        if mode == "gaussian":
            rng = np.random.default_rng(seed)
            matrix = rng.normal(0.0, float(frequency_count), size=(component_count, input_dim))
        elif mode == "axis":
            scales = 2.0 ** np.arange(frequency_count)
            matrix = np.concatenate([np.outer(scales, np.eye(input_dim)[d]) for d in range(input_dim)])
        else:
            raise ValueError(f"Unknown Fourier mode '{mode}'")
        matrix = matrix.astype(np.float32)
        matrix.setflags(write=False)
        self._matrix = matrix

    @property
    def matrix(self) -> np.ndarray:
        return self._matrix

    @property
    def component_count(self) -> int:
        return self._matrix.shape[0]

    @property
    def output_dim(self) -> int:
        return 2 * self.component_count

    def __call__(self, coords: np.ndarray, scaled_area: float) -> Tensor:
        if not 0.0 <= scaled_area <= 1.0:
            raise AreaRangeError(f"Scaled area {scaled_area} outside [0, 1]")
        coords = np.asarray(coords, dtype=np.float32)
        if coords.ndim != 2 or coords.shape[1] != self.input_dim - 1:
            raise ShapeError(f"Expected (n, {self.input_dim - 1}) coordinates, got {coords.shape}")
        projection = coords @ self._matrix[:, :-1].T + np.float32(scaled_area) * self._matrix[:, -1]
        angles = np.float32(2 * np.pi) * projection
        return Tensor(np.concatenate([np.sin(angles), np.cos(angles)], axis=1))


def encode(encoder: FourierEncoder, grid: CoordinateGrid, area: AreaParameter) -> Tensor:
    return encoder(grid.coords, area.scaled)


@dataclass
class NetworkConfig:
    hidden_layers: int = 5
    hidden_width: int = 256
    frequency_count: int = 6
    component_count: int = 128
    fourier_mode: str = "gaussian"
    a_min: float = AREA_MIN
    a_max: float = AREA_MAX


@dataclass
class ImplicitMaskNetwork:
    encoder: FourierEncoder
    weights: List[Tensor]
    biases: List[Tensor]
    seed: int = 0
    config: NetworkConfig = field(default_factory=NetworkConfig)
    # per-epoch training loss
    history: List[float] = field(default_factory=list)

    def parameters(self) -> List[Tensor]:
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    def forward(self, features: Tensor) -> Tensor:
        h = features
        last = len(self.weights) - 1
        for index, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = affine(h, w, b)
            h = sigmoid(h) if index == last else relu(h)
        return h

    def area(self, raw: float) -> AreaParameter:
        return AreaParameter(raw, self.config.a_min, self.config.a_max)

    def state_dict(self) -> Dict[str, np.ndarray]:
        state = {"encoder.matrix": np.array(self.encoder.matrix)}
        for index, (w, b) in enumerate(zip(self.weights, self.biases)):
            state[f"layer{index}.weight"] = w.data
            state[f"layer{index}.bias"] = b.data
        return state

    def load_state_dict(self, state: Mapping[str, np.ndarray]) -> None:
        if not np.array_equal(state["encoder.matrix"], self.encoder.matrix):
            raise ShapeError("Stored Fourier matrix does not match this network's encoder")
        for index, (w, b) in enumerate(zip(self.weights, self.biases)):
            for tensor, key in ((w, f"layer{index}.weight"), (b, f"layer{index}.bias")):
                if state[key].shape != tensor.shape:
                    raise ShapeError(f"{key}: stored shape {state[key].shape} != {tensor.shape}")
                tensor.data = np.array(state[key], dtype=np.float32)


def init_weights(seed: int, config: Optional[NetworkConfig] = None) -> ImplicitMaskNetwork:
    """He-initialized hidden layers, fan-in scaled output layer, zero biases."""
    config = config or NetworkConfig()
    encoder = FourierEncoder(config.frequency_count, config.component_count, seed=seed, mode=config.fourier_mode)
    rng = np.random.default_rng([seed, 1])
    widths = [encoder.output_dim] + [config.hidden_width] * config.hidden_layers + [1]
    weights, biases = [], []
    for index, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
        gain = 1.0 if index == len(widths) - 2 else 2.0
        w = rng.normal(0.0, np.sqrt(gain / fan_in), size=(fan_in, fan_out)).astype(np.float32)
        weights.append(Tensor(w, requires_grad=True, name=f"layer{index}.weight"))
        biases.append(Tensor(np.zeros(fan_out, dtype=np.float32), requires_grad=True, name=f"layer{index}.bias"))
    logger.debug("Initialized mask network seed=%d widths=%s", seed, widths)
    return ImplicitMaskNetwork(encoder, weights, biases, seed, config)


def forward_mask(net: ImplicitMaskNetwork, grid: CoordinateGrid, area: Union[AreaParameter, float]) -> Tensor:
    """Raw (unfiltered) h×w mask; a float ``area`` is taken as already scaled."""
    scaled = area.scaled if isinstance(area, AreaParameter) else float(area)
    features = net.encoder(grid.coords, scaled)
    out = net.forward(features)
    return reshape(out, grid.shape)
