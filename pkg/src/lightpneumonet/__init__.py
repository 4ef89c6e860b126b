"""LightPneumoNet: a from-scratch CNN engine for chest X-ray classification."""
from ._accel import backend_name, set_threads
from .checkpoint import load_weights, save_weights
from .config import RunConfig, load_config
from .data import CLASS_NAMES, load_manifest
from .gradcheck import gradient_check
from .metrics import ConfusionMatrix, metrics_from_confusion
from .model import build_lightpneumonet, build_spec, count_params, init_params, model_backward, model_forward
from .training import TrainConfig, evaluate, train

__version__ = "0.1.0"

__all__ = [
    "CLASS_NAMES",
    "ConfusionMatrix",
    "RunConfig",
    "TrainConfig",
    "backend_name",
    "build_lightpneumonet",
    "build_spec",
    "count_params",
    "evaluate",
    "gradient_check",
    "init_params",
    "load_config",
    "load_manifest",
    "load_weights",
    "metrics_from_confusion",
    "model_backward",
    "model_forward",
    "save_weights",
    "set_threads",
    "train",
]
