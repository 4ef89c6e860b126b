"""Run configuration loaded from JSON.

Every field defaults to the reference experiment, so ``{}`` reproduces it.
Unknown keys are rejected.
"""
import json
from dataclasses import asdict, dataclass, fields

from .augment import AugmentationConfig
from .data import PreprocessConfig
from .errors import ConfigError
from .model import build_spec, shape_trace
from .training import TrainConfig


@dataclass(frozen=True)
class RunConfig:
    dataset_root: str = "data/chest_xray"
    out_dir: str = "runs/lightpneumonet"
    seed: int = 42
    architecture: str = "lightpneumonet"
    # training
    max_epochs: int = 100
    batch_size: int = 4
    patience: int = 5
    class_weights: tuple = (2.0, 1.2)
    loss_normalization: str = "weight_sum"
    # optimizer
    lr: float = 1e-4
    weight_decay: float = 1e-5
    decay_mode: str = "decoupled"
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-7
    # preprocessing
    target_size: tuple = (224, 224)
    rescale: float = 1.0 / 255.0
    luma_weights: tuple = (0.299, 0.587, 0.114)
    # augmentation (training split only)
    augment: bool = True
    rotation_range: float = 12.0
    zoom_range: float = 0.15
    width_shift: float = 0.15
    height_shift: float = 0.15
    shear_range: float = 0.15
    shear_unit: str = "degrees"
    fill_mode: str = "nearest"
    horizontal_flip: bool = False
    # execution
    threads: int = None

    def train_config(self):
        return TrainConfig(
            max_epochs=self.max_epochs,
            batch_size=self.batch_size,
            patience=self.patience,
            class_weights=tuple(self.class_weights),
            seed=self.seed,
            lr=self.lr,
            weight_decay=self.weight_decay,
            decay_mode=self.decay_mode,
            beta1=self.beta1,
            beta2=self.beta2,
            epsilon=self.epsilon,
            loss_normalization=self.loss_normalization,
        )

    def augmentation_config(self):
        if not self.augment:
            return None
        return AugmentationConfig(
            rotation_range=self.rotation_range,
            zoom_range=self.zoom_range,
            width_shift=self.width_shift,
            height_shift=self.height_shift,
            shear_range=self.shear_range,
            shear_unit=self.shear_unit,
            fill_mode=self.fill_mode,
            horizontal_flip=self.horizontal_flip,
        )

    def preprocess_config(self):
        return PreprocessConfig(tuple(self.target_size), self.rescale, tuple(self.luma_weights))

    def model_spec(self):
        h, w = self.target_size
        if h != w:
            raise ConfigError("target_size must be square")
        return build_spec(self.architecture, h)

    def validate(self):
        """Build every derived config once so bad values fail early as ConfigError."""
        try:
            self.train_config()
            self.augmentation_config()
            shape_trace(self.model_spec())
        except ConfigError:
            raise
        except Exception as exc:
            raise ConfigError(str(exc)) from exc
        if len(self.class_weights) != 2:
            raise ConfigError("class_weights needs exactly two entries (NORMAL, PNEUMONIA)")
        if self.threads is not None and self.threads < 1:
            raise ConfigError("threads must be >= 1")
        return self

    def to_dict(self):
        d = asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


_FIELDS = {f.name: f for f in fields(RunConfig)}
_TUPLE_FIELDS = {"class_weights", "target_size", "luma_weights"}


def _coerce(key, value):
    default = _FIELDS[key].default
    if key in _TUPLE_FIELDS:
        if not isinstance(value, list) or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in value
        ):
            raise ConfigError(f"{key}: expected a list of numbers")
        return tuple(value)
    if key == "threads":
        if value is not None and (not isinstance(value, int) or isinstance(value, bool)):
            raise ConfigError(f"{key}: expected an integer or null")
        return value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{key}: expected true or false")
        return value
    if isinstance(default, int):
        if not isinstance(value, int) or isinstance(value, bool):
            raise ConfigError(f"{key}: expected an integer")
        return value
    if isinstance(default, float):
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ConfigError(f"{key}: expected a number")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{key}: expected a string")
        return value
    return value


def config_from_dict(raw):
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(raw) - set(_FIELDS))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    values = {k: _coerce(k, v) for k, v in raw.items()}
    return RunConfig(**values).validate()


def load_config(path):
    if path is None:
        return RunConfig().validate()
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from None
    return config_from_dict(raw)
