"""Dataset discovery, image decoding and preprocessing.

Expected layout::

    <root>/{train,test,val}/{NORMAL,PNEUMONIA}/<image files>

Pipeline per image: decode -> grayscale -> bilinear resize ->
[affine augmentation, training only] -> rescale to [0, 1] -> [H, W, 1].
"""
import io
import os
from dataclasses import dataclass, field

import numpy as np

from .augment import apply_affine, sample_affine_params
from .errors import DecodeError, EmptyDatasetError, LayoutError, ShapeError

CLASS_NAMES = ("NORMAL", "PNEUMONIA")
SPLITS = ("train", "test", "val")
IMAGE_EXTENSIONS = (".jpeg", ".jpg", ".png", ".pgm")
LUMA_WEIGHTS = (0.299, 0.587, 0.114)


@dataclass(frozen=True)
class ImageRecord:
    path: str
    label: int


@dataclass
class DatasetManifest:
    split: str
    records: list
    class_counts: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.records)

    @property
    def labels(self):
        return np.array([r.label for r in self.records], dtype=np.int64)


@dataclass(frozen=True)
class PreprocessConfig:
    target_size: tuple = (224, 224)
    rescale: float = 1.0 / 255.0
    luma_weights: tuple = LUMA_WEIGHTS


def load_manifest(root_dir, split):
    """One record per image under ``root_dir/split``; NORMAL -> 0, PNEUMONIA -> 1."""
    split_dir = os.path.join(root_dir, split)
    if not os.path.isdir(split_dir):
        raise LayoutError(f"split directory not found: {split_dir}")
    records = []
    counts = {}
    for label, cls in enumerate(CLASS_NAMES):
        cls_dir = os.path.join(split_dir, cls)
        if not os.path.isdir(cls_dir):
            raise LayoutError(f"missing class folder {cls_dir}")
        names = sorted(
            f for f in os.listdir(cls_dir)
            if f.lower().endswith(IMAGE_EXTENSIONS) and os.path.isfile(os.path.join(cls_dir, f))
        )
        records.extend(ImageRecord(os.path.join(cls_dir, f), label) for f in names)
        counts[cls] = len(names)
    if not records:
        raise EmptyDatasetError(f"no images found under {split_dir}")
    return DatasetManifest(split, records, counts)


def _pgm_tokens(data, count):
    """Read ``count`` whitespace-separated header tokens after the magic, skipping comments."""
    tokens = []
    pos = 2
    while len(tokens) < count:
        if pos >= len(data):
            raise DecodeError("truncated PGM header", fmt="PGM")
        ch = data[pos:pos + 1]
        if ch == b"#":
            end = data.find(b"\n", pos)
            pos = len(data) if end < 0 else end + 1
        elif ch.isspace():
            pos += 1
        else:
            start = pos
            while pos < len(data) and not data[pos:pos + 1].isspace():
                pos += 1
            tokens.append(data[start:pos])
    # exactly one whitespace byte separates the header from the raster
    return tokens, pos + 1


def decode_pgm(data):
    """Decode a binary (P5) PGM with maxval <= 255."""
    if data[:2] != b"P5":
        raise DecodeError("not a binary PGM (P5)", fmt="PGM")
    try:
        tokens, start = _pgm_tokens(data, 3)
        width, height, maxval = (int(t) for t in tokens)
    except ValueError:
        raise DecodeError("malformed PGM header", fmt="PGM") from None
    if width < 1 or height < 1:
        raise DecodeError("PGM dimensions must be positive", fmt="PGM")
    if not 0 < maxval < 256:
        raise DecodeError(f"only 8-bit PGM is supported (maxval {maxval})", fmt="PGM")
    raster = data[start:start + width * height]
    if len(raster) != width * height:
        raise DecodeError("truncated PGM raster", fmt="PGM")
    img = np.frombuffer(raster, dtype=np.uint8).reshape(height, width, 1)
    if maxval != 255:
        img = np.round(img.astype(np.float64) * (255.0 / maxval)).astype(np.uint8)
    return img.copy()


def _decode_with_pillow(data, fmt):
    from PIL import Image

    try:
        with Image.open(io.BytesIO(data)) as im:
            im.load()
            if im.mode in ("L", "1", "I;16", "I", "F"):
                arr = np.asarray(im.convert("L"))[..., None]
            else:
                arr = np.asarray(im.convert("RGB"))
    except Exception as exc:  # Pillow raises a zoo of exception types
        raise DecodeError(f"corrupt or unsupported {fmt}: {exc}", fmt=fmt) from None
    return np.ascontiguousarray(arr, dtype=np.uint8)


def sniff_format(data):
    if data[:3] == b"\xff\xd8\xff":
        return "JPEG"
    if data[:8] == b"\x89PNG\r\n\x1a\n":
        return "PNG"
    if data[:2] == b"P5":
        return "PGM"
    return None


DECODERS = {
    "PGM": decode_pgm,
    "JPEG": lambda data: _decode_with_pillow(data, "JPEG"),
    "PNG": lambda data: _decode_with_pillow(data, "PNG"),
}


def decode_image(path):
    """Decode a JPEG, 8-bit PNG or P5 PGM into an ``[H, W, C]`` uint8 array, C in {1, 3}."""
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise DecodeError(f"cannot read file: {exc.strerror}", path=path) from None
    fmt = sniff_format(data)
    if fmt is None:
        raise DecodeError("unrecognized image format (expected JPEG, PNG or PGM)", path=path)
    try:
        return DECODERS[fmt](data)
    except DecodeError as exc:
        raise DecodeError(str(exc), path=path, fmt=fmt) from None


def to_grayscale(img, weights=LUMA_WEIGHTS):
    """BT.601 luma for 3-channel input; single-channel input is returned unchanged."""
    if img.ndim != 3 or img.shape[2] not in (1, 3):
        raise ShapeError(f"expected [H, W, 1] or [H, W, 3], got {img.shape}")
    if img.shape[2] == 1:
        return img
    rgb = img.astype(np.float64)
    y = weights[0] * rgb[..., 0] + weights[1] * rgb[..., 1] + weights[2] * rgb[..., 2]
    return y[..., None]


def _axis_coords(n_in, n_out):
    scale = n_in / n_out
    src = (np.arange(n_out) + 0.5) * scale - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    i0 = np.floor(src).astype(np.int64)
    i1 = np.minimum(i0 + 1, n_in - 1)
    return i0, i1, src - i0


def resize_bilinear(img, size=(224, 224)):
    """Bilinear resize with half-pixel centers; returns float64 ``[h, w, C]``."""
    out_h, out_w = size
    h, w, _ = img.shape
    src = img.astype(np.float64)
    if (h, w) == (out_h, out_w):
        return src
    r0, r1, fr = _axis_coords(h, out_h)
    c0, c1, fc = _axis_coords(w, out_w)
    fr = fr[:, None, None]
    fc = fc[None, :, None]
    # a + (b - a) * t keeps constant regions exactly constant
    top = src[r0][:, c0] + (src[r0][:, c1] - src[r0][:, c0]) * fc
    bottom = src[r1][:, c0] + (src[r1][:, c1] - src[r1][:, c0]) * fc
    return top + (bottom - top) * fr


def rescale(img, factor=1.0 / 255.0):
    return img.astype(np.float64) * factor


def preprocess(img, cfg=PreprocessConfig(), affine=None):
    """Grayscale, resize, optionally augment, rescale; returns float64 ``[H, W, 1]``."""
    gray = to_grayscale(img, cfg.luma_weights)
    resized = resize_bilinear(gray, cfg.target_size)
    if affine is not None:
        resized = apply_affine(resized, affine)
    return rescale(resized, cfg.rescale).reshape(cfg.target_size[0], cfg.target_size[1], 1)


def one_hot(labels, num_classes=2, dtype=np.float32):
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((len(labels), num_classes), dtype=dtype)
    out[np.arange(len(labels)), labels] = 1
    return out


def make_batch(manifest, indices, augment=None, streams=None, cfg=PreprocessConfig(),
               dtype=np.float32):
    """Assemble ``(images [N, H, W, 1], one-hot labels [N, 2])``.

    With ``augment`` set, ``streams`` supplies one generator per index and a
    fresh affine transform is drawn for each sample.
    """
    indices = list(indices)
    if augment is not None and (streams is None or len(streams) != len(indices)):
        raise ValueError("augmentation needs one rng stream per sample")
    images = np.empty((len(indices), cfg.target_size[0], cfg.target_size[1], 1), dtype=dtype)
    for k, idx in enumerate(indices):
        rec = manifest.records[idx]
        img = decode_image(rec.path)
        affine = sample_affine_params(augment, streams[k], cfg.target_size) if augment else None
        images[k] = preprocess(img, cfg, affine)
    labels = one_hot([manifest.records[i].label for i in indices], dtype=dtype)
    return images, labels
