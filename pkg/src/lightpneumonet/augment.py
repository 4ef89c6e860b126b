"""Random affine augmentation with nearest (edge-replicating) fill."""
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class AugmentationConfig:
    rotation_range: float = 12.0  # degrees
    zoom_range: float = 0.15
    width_shift: float = 0.15  # fraction of width
    height_shift: float = 0.15  # fraction of height
    shear_range: float = 0.15
    shear_unit: str = "degrees"  # or "radians"
    fill_mode: str = "nearest"
    horizontal_flip: bool = False

    def __post_init__(self):
        for name in ("rotation_range", "zoom_range", "width_shift", "height_shift", "shear_range"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.zoom_range >= 1:
            raise ConfigError("zoom_range must be < 1")
        if self.shear_unit not in ("degrees", "radians"):
            raise ConfigError(f"shear_unit must be 'degrees' or 'radians', got {self.shear_unit!r}")
        if self.fill_mode != "nearest":
            raise ConfigError(f"only fill_mode 'nearest' is supported, got {self.fill_mode!r}")

    @property
    def shear_limit_degrees(self):
        if self.shear_unit == "radians":
            return math.degrees(self.shear_range)
        return self.shear_range


@dataclass(frozen=True)
class AffineParams:
    theta: float = 0.0  # rotation, degrees
    zx: float = 1.0
    zy: float = 1.0
    tx: float = 0.0  # pixels along the width axis
    ty: float = 0.0  # pixels along the height axis
    shear: float = 0.0  # degrees
    flip: bool = False

    def is_identity(self):
        return self == AffineParams()


def sample_affine_params(cfg, rng, size=(224, 224)):
    """Draw one transform. The number and order of draws is fixed, so a
    stream yields the same parameters regardless of which ranges are zero."""
    height, width = size
    theta = rng.uniform(-cfg.rotation_range, cfg.rotation_range)
    zx = rng.uniform(1.0 - cfg.zoom_range, 1.0 + cfg.zoom_range)
    zy = rng.uniform(1.0 - cfg.zoom_range, 1.0 + cfg.zoom_range)
    tx = rng.uniform(-cfg.width_shift, cfg.width_shift) * width
    ty = rng.uniform(-cfg.height_shift, cfg.height_shift) * height
    shear = rng.uniform(-cfg.shear_range, cfg.shear_range)
    flip = bool(rng.random() < 0.5) and cfg.horizontal_flip
    if cfg.shear_unit == "radians":
        shear = math.degrees(shear)
    return AffineParams(float(theta), float(zx), float(zy), float(tx), float(ty), float(shear), flip)


def affine_matrix(p):
    """Forward 2x2 linear part ``rotation @ shear @ zoom`` acting on (x, y)."""
    t = math.radians(p.theta)
    s = math.radians(p.shear)
    rot = np.array([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])
    shear = np.array([[1.0, -math.sin(s)], [0.0, math.cos(s)]])
    zoom = np.array([[p.zx, 0.0], [0.0, p.zy]])
    return rot @ shear @ zoom


def apply_affine(img, p):
    """Warp ``img`` ([H, W, C]) about its center, then translate by (tx, ty).

    Each output pixel reads the inverse-mapped source location with
    nearest-neighbour rounding; coordinates outside the image clamp to the
    border.
    """
    if p.is_identity():
        return img
    h, w = img.shape[:2]
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    inv = np.linalg.inv(affine_matrix(p))
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    dx = xs - cx - p.tx
    dy = ys - cy - p.ty
    sx = inv[0, 0] * dx + inv[0, 1] * dy + cx
    sy = inv[1, 0] * dx + inv[1, 1] * dy + cy
    if p.flip:
        sx = (w - 1) - sx
    col = np.clip(np.floor(sx + 0.5), 0, w - 1).astype(np.intp)
    row = np.clip(np.floor(sy + 0.5), 0, h - 1).astype(np.intp)
    return img[row, col]
