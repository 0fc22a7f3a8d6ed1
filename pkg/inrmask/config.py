"""Run configuration: one dataclass whose field names are the config-file keys."""
import dataclasses
import logging
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Tuple, Union, get_type_hints

from dotenv import dotenv_values

from .attribution import (
    DEFAULT_EPOCHS,
    DEFAULT_LAMBDA_R,
    DEFAULT_LEARNING_RATE,
    AreaSearchConfig,
    ExplainConfig,
    LossWeights,
    TrainConfig,
)
from .errors import ConfigError
from .inr import NetworkConfig

logger = logging.getLogger(__name__)

PERTURBATIONS = ("blur", "black")
FOURIER_MODES = ("gaussian", "axis")
# the published schedule: four times the epochs at a tenth of the step
FULL_SCHEDULE = {"epochs": 4000, "learning_rate": 1e-4}


@dataclass(frozen=True)
class RunConfig:
    epochs: int = DEFAULT_EPOCHS
    learning_rate: float = DEFAULT_LEARNING_RATE
    lambda_r: float = DEFAULT_LAMBDA_R
    lambda_d: float = 1.0
    area_min: float = 0.025
    area_max: float = 0.2
    area_grid: Tuple[float, ...] = (0.025, 0.05, 0.1, 0.2)
    phi0: Optional[float] = None
    phi0_rel: float = 0.9
    blur_sigma_frac: float = 0.05
    filter_radius_frac: float = 0.05
    perturbation: str = "blur"
    cutoff: float = 0.5
    binarize_threshold: float = 0.5
    soft_precision: bool = False
    seeds: Tuple[int, ...] = (0, 1, 2, 3, 4)
    out_dir: str = "out"
    hidden_layers: int = 5
    hidden_width: int = 256
    frequency_count: int = 6
    component_count: int = 128
    fourier_mode: str = "gaussian"
    regularize_filtered: bool = True
    baseline_divisor: int = 8
    baseline_learning_rate: float = 0.05
    # -1 explains the predicted class
    target_class: int = -1
    workers: int = 1
    log_every: int = 100
    toy_epochs: int = 30
    toy_learning_rate: float = 0.01
    toy_batch_size: int = 16

    def __post_init__(self):
        if self.perturbation not in PERTURBATIONS:
            raise ConfigError(f"perturbation must be one of {PERTURBATIONS}, got '{self.perturbation}'")
        if self.fourier_mode not in FOURIER_MODES:
            raise ConfigError(f"fourier_mode must be one of {FOURIER_MODES}, got '{self.fourier_mode}'")
        if not self.seeds:
            raise ConfigError("seeds must list at least one seed")
        for key in ("epochs", "workers", "hidden_layers", "hidden_width", "frequency_count",
                    "component_count", "baseline_divisor", "toy_epochs", "toy_batch_size"):
            if getattr(self, key) < 1:
                raise ConfigError(f"{key} must be at least 1, got {getattr(self, key)}")
        for key in ("cutoff", "binarize_threshold"):
            if not 0 < getattr(self, key) < 1:
                raise ConfigError(f"{key} must lie in (0, 1), got {getattr(self, key)}")
        if not 0 < self.phi0_rel <= 1:
            raise ConfigError(f"phi0_rel must lie in (0, 1], got {self.phi0_rel}")
        if not 0 <= self.area_min < self.area_max <= 1:
            raise ConfigError(f"Area range [{self.area_min}, {self.area_max}] is invalid")
        # the derived objects carry the remaining checks
        try:
            self.search_config()
            self.loss_weights()
            self.train_config(self.seeds[0])
        except ValueError as e:
            raise ConfigError(str(e)) from e

    # -- derived objects ----------------------------------------------------

    def train_config(self, seed: int, progress: bool = False) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            learning_rate=self.learning_rate,
            seed=seed,
            regularize_filtered=self.regularize_filtered,
            log_every=self.log_every,
            progress=progress,
        )

    def loss_weights(self) -> LossWeights:
        return LossWeights(self.lambda_r, self.lambda_d)

    def search_config(self) -> AreaSearchConfig:
        return AreaSearchConfig(self.area_grid, self.phi0_rel, self.phi0, self.area_min, self.area_max)

    def network_config(self) -> NetworkConfig:
        return NetworkConfig(
            hidden_layers=self.hidden_layers,
            hidden_width=self.hidden_width,
            frequency_count=self.frequency_count,
            component_count=self.component_count,
            fourier_mode=self.fourier_mode,
            a_min=self.area_min,
            a_max=self.area_max,
        )

    def explain_config(self, seed: int, progress: bool = False) -> ExplainConfig:
        return ExplainConfig(
            train=self.train_config(seed, progress),
            weights=self.loss_weights(),
            search=self.search_config(),
            network=self.network_config(),
            filter_radius_frac=self.filter_radius_frac,
            baseline_divisor=self.baseline_divisor,
            baseline_learning_rate=self.baseline_learning_rate,
            target_class=None if self.target_class < 0 else self.target_class,
        )

    # -- persistence --------------------------------------------------------

    def with_overrides(self, **overrides: Any) -> "RunConfig":
        """Replace the given keys; ``None`` values leave a key untouched."""
        unknown = set(overrides) - set(field_names())
        if unknown:
            raise ConfigError(f"Unknown configuration keys: {', '.join(sorted(unknown))}")
        changes = {key: value for key, value in overrides.items() if value is not None}
        return dataclasses.replace(self, **changes) if changes else self

    def to_dict(self) -> Dict[str, Any]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def dump(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        lines = ["# inrmask run configuration"]
        lines += [f"{key} = {format_value(value)}" for key, value in self.to_dict().items()]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path


def field_names() -> Tuple[str, ...]:
    return tuple(f.name for f in fields(RunConfig))


def format_value(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "yes", "1", "on"):
        return True
    if lowered in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"'{text}' is not a boolean")


def _tuple_of(item: Callable[[str], Any]) -> Callable[[str], Tuple]:
    def parse(text: str) -> Tuple:
        parts = [part.strip() for part in text.split(",") if part.strip()]
        return tuple(item(part) for part in parts)

    return parse


def _optional(item: Callable[[str], Any]) -> Callable[[str], Any]:
    def parse(text: str) -> Any:
        return None if text.strip().lower() in ("", "none") else item(text)

    return parse


_PARSERS: Dict[Any, Callable[[str], Any]] = {
    int: int,
    float: float,
    str: str,
    bool: _parse_bool,
    Tuple[float, ...]: _tuple_of(float),
    Tuple[int, ...]: _tuple_of(int),
    Optional[float]: _optional(float),
}


def parse_value(key: str, text: Optional[str]) -> Any:
    hints = get_type_hints(RunConfig)
    if key not in hints:
        raise ConfigError(f"Unknown configuration key '{key}'")
    text = "" if text is None else text
    try:
        return _PARSERS[hints[key]](text.strip())
    except ValueError as e:
        raise ConfigError(f"Invalid value for '{key}': {e}") from None


def parse_mapping(values: Dict[str, Optional[str]]) -> Dict[str, Any]:
    unknown = [key for key in values if key not in field_names()]
    if unknown:
        raise ConfigError(f"Unknown configuration keys: {', '.join(unknown)}")
    return {key: parse_value(key, text) for key, text in values.items()}


def load_config(path: Optional[Union[str, Path]] = None, **overrides: Any) -> RunConfig:
    """Defaults, then the ``key = value`` file at ``path``, then ``overrides``."""
    config = RunConfig()
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"Config file not found: {path}")
        values = dotenv_values(path, interpolate=False)
        logger.debug("Loaded %d keys from %s", len(values), path)
        config = config.with_overrides(**parse_mapping(dict(values)))
    return config.with_overrides(**overrides)
