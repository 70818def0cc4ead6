"""Image decoding, conditioning, and augmentation.

Pixel arrays are numpy (H, W, C) throughout: uint8 for raw pixels,
float64 once normalized.  Preprocessing runs grayscale -> resize ->
denoise -> normalize so denoising sees resolution-fixed data and all
downstream math sees a single scale.  Geometric operations sample
bilinearly and fill out-of-bounds reads with the nearest edge value,
which avoids black borders that would perturb embeddings.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from PIL import Image, UnidentifiedImageError

from .embedding import MaskStatus
from .errors import CorruptStream, NotColor, UnsupportedFormat

#: Side length expected by the feature extractor.
DEFAULT_TARGET_SIZE = 224

#: ITU-R 601 luminance weights for RGB -> gray.
_LUMA = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class ImageRecord:
    """A decoded face image with its identity label and mask status."""

    id: str
    subject: str
    mask_status: MaskStatus
    pixels: np.ndarray  # (H, W, C) uint8, C in {1, 3}

    def __post_init__(self) -> None:
        px = np.asarray(self.pixels, dtype=np.uint8)
        if px.ndim == 2:
            px = px[:, :, None]
        if px.ndim != 3 or px.shape[2] not in (1, 3):
            raise ValueError(f"pixels must be (H, W, 1|3), got shape {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError("image must be at least 1x1")
        if not self.id:
            raise ValueError("record id must be non-empty")
        if not self.subject:
            raise ValueError("record subject must be non-empty")
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]


@dataclass(frozen=True)
class PreprocessConfig:
    target_size: int = DEFAULT_TARGET_SIZE
    normalize_range: tuple[float, float] = (0.0, 1.0)
    to_grayscale: bool = False
    denoise_sigma: float = 0.0  # 0 = off

    def __post_init__(self) -> None:
        if self.target_size < 8:
            raise ValueError(f"target_size must be >= 8, got {self.target_size}")
        lo, hi = self.normalize_range
        if not lo < hi:
            raise ValueError(f"normalize_range must satisfy lower < upper, got {self.normalize_range}")
        if self.denoise_sigma < 0:
            raise ValueError("denoise_sigma must be nonnegative")


# --- decoding ---------------------------------------------------------------

def decode_image(data: bytes) -> np.ndarray:
    """Decode a PNG/JPEG/BMP/GIF byte stream to an (H, W, C) uint8 array.

    Grayscale sources stay 1-channel; everything else lands in RGB.
    Raises UnsupportedFormat for unrecognized streams and CorruptStream
    for recognized but damaged ones.
    """
    try:
        img = Image.open(io.BytesIO(data))
    except UnidentifiedImageError as exc:
        raise UnsupportedFormat(f"not a decodable image stream: {exc}") from exc
    except OSError as exc:
        # Recognized signature but the header itself is damaged.
        raise CorruptStream(f"damaged image stream: {exc}") from exc
    try:
        img.load()
    except (OSError, SyntaxError, ValueError) as exc:
        raise CorruptStream(f"damaged image stream: {exc}") from exc
    if img.mode == "L":
        pass
    elif img.mode == "LA":
        img = img.convert("L")
    elif img.mode != "RGB":
        img = img.convert("RGB")
    arr = np.asarray(img, dtype=np.uint8)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return arr


def ensure_rgb(pixels: np.ndarray) -> np.ndarray:
    """Tile a 1-channel image to 3 channels; 3-channel input passes through."""
    arr = np.asarray(pixels)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim == 3 and arr.shape[2] == 1:
        return np.repeat(arr, 3, axis=2)
    return arr


def encode_png(pixels: np.ndarray) -> bytes:
    """Encode an (H, W, 1|3) uint8 array as PNG (lossless)."""
    arr = np.asarray(pixels, dtype=np.uint8)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    img = Image.fromarray(arr)
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


# --- bilinear sampling core -------------------------------------------------

def _bilinear_sample(img: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Sample img (H, W, C float) at fractional (ys, xs); out-of-bounds
    coordinates clamp to the nearest edge pixel."""
    h, w = img.shape[:2]
    y0 = np.floor(ys)
    x0 = np.floor(xs)
    fy = (ys - y0)[..., None]
    fx = (xs - x0)[..., None]
    y0 = y0.astype(np.int64)
    x0 = x0.astype(np.int64)
    y0c = np.clip(y0, 0, h - 1)
    y1c = np.clip(y0 + 1, 0, h - 1)
    x0c = np.clip(x0, 0, w - 1)
    x1c = np.clip(x0 + 1, 0, w - 1)
    top = img[y0c, x0c] * (1.0 - fx) + img[y0c, x1c] * fx
    bot = img[y1c, x0c] * (1.0 - fx) + img[y1c, x1c] * fx
    return top * (1.0 - fy) + bot * fy


def _finish_like(source: np.ndarray, result: np.ndarray) -> np.ndarray:
    """Round and clip back to uint8 when the source was uint8."""
    if np.issubdtype(source.dtype, np.integer):
        return np.clip(np.floor(result + 0.5), 0, 255).astype(np.uint8)
    return result


# --- geometry ---------------------------------------------------------------

def resize(img: np.ndarray, target: int) -> np.ndarray:
    """Bilinear resize to target x target (aspect ratio not preserved)."""
    if target < 1:
        raise ValueError(f"target must be positive, got {target}")
    arr = np.asarray(img)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    h, w = arr.shape[:2]
    if h < 1 or w < 1:
        raise ValueError("source image must be at least 1x1")
    # Map output pixel centers onto the source grid.
    ys = (np.arange(target) + 0.5) * (h / target) - 0.5
    xs = (np.arange(target) + 0.5) * (w / target) - 0.5
    grid_y, grid_x = np.meshgrid(ys, xs, indexing="ij")
    out = _bilinear_sample(arr.astype(np.float64), grid_y, grid_x)
    return _finish_like(arr, out)


@dataclass(frozen=True)
class FlipHorizontal:
    pass


@dataclass(frozen=True)
class Rotate:
    degrees: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.degrees):
            raise ValueError("rotation degrees must be finite")


@dataclass(frozen=True)
class Zoom:
    factor: float

    def __post_init__(self) -> None:
        if not (self.factor > 0 and math.isfinite(self.factor)):
            raise ValueError(f"zoom factor must be positive, got {self.factor}")


@dataclass(frozen=True)
class Shift:
    dx: float
    dy: float


Transform = Union[FlipHorizontal, Rotate, Zoom, Shift]

#: Conservative face-preserving sampling ranges used by dataset expansion
#: and the trainer: rotation degrees, zoom factor, shift as fraction of
#: the side, and flip probability.
AUGMENT_ROTATE_RANGE = (-15.0, 15.0)
AUGMENT_ZOOM_RANGE = (0.9, 1.1)
AUGMENT_SHIFT_FRACTION = 0.10
AUGMENT_FLIP_PROBABILITY = 0.5


def augment(img: np.ndarray, transform: Transform) -> np.ndarray:
    """Apply one geometric transform about the image center.

    Output dims equal input dims; sampling is bilinear with nearest-edge
    fill.  Positive Rotate degrees turn the content counterclockwise,
    Zoom factors above 1 magnify, Shift moves content by (+dx right,
    +dy down) pixels.
    """
    arr = np.asarray(img)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if isinstance(transform, FlipHorizontal):
        return np.ascontiguousarray(arr[:, ::-1])
    h, w = arr.shape[:2]
    cy = (h - 1) / 2.0
    cx = (w - 1) / 2.0
    out_y, out_x = np.meshgrid(np.arange(h, dtype=np.float64),
                               np.arange(w, dtype=np.float64), indexing="ij")
    if isinstance(transform, Rotate):
        theta = math.radians(transform.degrees)
        c, s = math.cos(theta), math.sin(theta)
        dy = out_y - cy
        dx = out_x - cx
        src_y = cy - s * dx + c * dy
        src_x = cx + c * dx + s * dy
    elif isinstance(transform, Zoom):
        src_y = cy + (out_y - cy) / transform.factor
        src_x = cx + (out_x - cx) / transform.factor
    elif isinstance(transform, Shift):
        src_y = out_y - transform.dy
        src_x = out_x - transform.dx
    else:
        raise TypeError(f"unknown transform {transform!r}")
    out = _bilinear_sample(arr.astype(np.float64), src_y, src_x)
    return _finish_like(arr, out)


# --- photometric steps ------------------------------------------------------

def normalize(img: np.ndarray, value_range: tuple[float, float] = (0.0, 1.0)) -> np.ndarray:
    """Map 8-bit pixel values affinely into [lower, upper]."""
    lo, hi = value_range
    if not lo < hi:
        raise ValueError(f"range must satisfy lower < upper, got {value_range}")
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return lo + (arr / 255.0) * (hi - lo)


def to_grayscale(img: np.ndarray) -> np.ndarray:
    """Collapse a 3-channel image to 1 channel by luminance weighting:
    round(0.299 R + 0.587 G + 0.114 B)."""
    arr = np.asarray(img)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise NotColor(f"grayscale conversion needs 3 channels, got shape {arr.shape}")
    gray = arr.astype(np.float64) @ _LUMA
    gray = np.clip(np.floor(gray + 0.5), 0, 255)
    if np.issubdtype(arr.dtype, np.integer):
        gray = gray.astype(np.uint8)
    return gray[:, :, None]


def _gaussian_kernel(sigma: float) -> np.ndarray:
    radius = math.ceil(3.0 * sigma)
    xs = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(xs ** 2) / (2.0 * sigma * sigma))
    return k / k.sum()


def gaussian_denoise(img: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian smoothing, kernel radius ceil(3*sigma), reflect
    padding at the borders.  Preserves constant images exactly."""
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    arr = np.asarray(img)
    squeeze = arr.ndim == 2
    if squeeze:
        arr = arr[:, :, None]
    kernel = _gaussian_kernel(sigma)
    radius = len(kernel) // 2
    work = arr.astype(np.float64)
    for axis in (0, 1):
        pad = [(0, 0)] * 3
        pad[axis] = (radius, radius)
        padded = np.pad(work, pad, mode="reflect")
        acc = np.zeros_like(work)
        for i, kv in enumerate(kernel):
            sl = [slice(None)] * 3
            sl[axis] = slice(i, i + work.shape[axis])
            acc += kv * padded[tuple(sl)]
        work = acc
    out = _finish_like(arr, work)
    return out[:, :, 0] if squeeze else out


# --- pipeline ---------------------------------------------------------------

def preprocess(record: ImageRecord, config: PreprocessConfig | None = None) -> np.ndarray:
    """Run the full conditioning pipeline on one record.

    Order: optional grayscale -> resize to target -> optional denoise ->
    normalize.  The result is always (target, target, 3) float64 within
    the configured range; a single gray channel is replicated across all
    three because the feature extractor expects color input.
    """
    cfg = config or PreprocessConfig()
    px = record.pixels
    if cfg.to_grayscale and record.channels == 3:
        px = to_grayscale(px)
    px = resize(px, cfg.target_size)
    if cfg.denoise_sigma > 0:
        px = gaussian_denoise(px, cfg.denoise_sigma)
    tensor = normalize(px, cfg.normalize_range)
    if tensor.shape[2] == 1:
        tensor = np.repeat(tensor, 3, axis=2)
    return tensor
