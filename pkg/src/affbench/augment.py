"""Deterministic, seed-keyed training-time augmentations.

All randomness is derived from (seed, sample_key, stage) through a
counter-based generator, so outputs are independent of invocation order,
thread count, or global RNG state. Masks receive only the geometric
transforms, with nearest-neighbor resampling.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from ._interp import resize_bilinear, resize_nearest
from .errors import (
    CropLargerThanScaled,
    InvalidConfig,
    InvalidFactor,
    MissingFile,
    NegativeVariance,
    ParseError,
    ShapeMismatch,
)
from .maskio import LabelMask, RgbImage

_LUMA = np.array([0.299, 0.587, 0.114], dtype=np.float64)


def _check_interval(name: str, interval) -> tuple[float, float]:
    try:
        lo, hi = float(interval[0]), float(interval[1])
    except (TypeError, ValueError, IndexError) as exc:
        raise InvalidConfig(f"{name} must be a [lo, hi] pair") from exc
    if lo > hi:
        raise InvalidConfig(f"{name} has lo > hi: [{lo}, {hi}]")
    return lo, hi


@dataclass(frozen=True)
class AugmentConfig:
    """Augmentation recipe: flip probability, zoom-in scale interval, color
    jitter intervals, optional Gaussian-noise variance interval, and the
    center-crop window (None keeps the input resolution)."""

    flip_probability: float = 0.5
    scale_interval: tuple[float, float] = (1.0, 1.5)
    brightness_interval: tuple[float, float] = (0.9, 1.1)
    contrast_interval: tuple[float, float] = (0.9, 1.1)
    saturation_interval: tuple[float, float] = (0.9, 1.1)
    hue_interval: tuple[float, float] = (-0.1, 0.1)
    noise_variance_interval: tuple[float, float] | None = None
    crop_width: int | None = None
    crop_height: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.flip_probability <= 1.0:
            raise InvalidConfig(
                f"flip_probability must be in [0, 1], got {self.flip_probability}"
            )
        lo, hi = _check_interval("scale_interval", self.scale_interval)
        if lo < 1.0:
            raise InvalidConfig(f"scale_interval lower bound must be >= 1, got {lo}")
        for name in ("brightness_interval", "contrast_interval", "saturation_interval"):
            lo, _ = _check_interval(name, getattr(self, name))
            if lo < 0.0:
                raise InvalidConfig(f"{name} lower bound must be >= 0, got {lo}")
        lo, hi = _check_interval("hue_interval", self.hue_interval)
        if lo < -0.5 or hi > 0.5:
            raise InvalidConfig("hue_interval must lie within [-0.5, 0.5]")
        if self.noise_variance_interval is not None:
            lo, _ = _check_interval(
                "gaussian_noise_variance_interval", self.noise_variance_interval
            )
            if lo < 0.0:
                raise InvalidConfig("noise variance must be >= 0")
        if (self.crop_width is None) != (self.crop_height is None):
            raise InvalidConfig("crop width and height must be set together")
        if self.crop_width is not None and (self.crop_width < 1 or self.crop_height < 1):
            raise InvalidConfig("crop dimensions must be positive")

    def to_json(self) -> dict:
        return {
            "flip_probability": self.flip_probability,
            "scale_interval": list(self.scale_interval),
            "brightness_interval": list(self.brightness_interval),
            "contrast_interval": list(self.contrast_interval),
            "saturation_interval": list(self.saturation_interval),
            "hue_interval": list(self.hue_interval),
            "gaussian_noise_variance_interval": (
                list(self.noise_variance_interval)
                if self.noise_variance_interval is not None
                else None
            ),
            "crop": (
                [self.crop_width, self.crop_height]
                if self.crop_width is not None
                else None
            ),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "AugmentConfig":
        def pair(key, default):
            v = doc.get(key, default)
            return tuple(float(x) for x in v) if v is not None else None

        crop = doc.get("crop")
        return cls(
            flip_probability=float(doc.get("flip_probability", 0.5)),
            scale_interval=pair("scale_interval", (1.0, 1.5)),
            brightness_interval=pair("brightness_interval", (0.9, 1.1)),
            contrast_interval=pair("contrast_interval", (0.9, 1.1)),
            saturation_interval=pair("saturation_interval", (0.9, 1.1)),
            hue_interval=pair("hue_interval", (-0.1, 0.1)),
            noise_variance_interval=pair("gaussian_noise_variance_interval", None),
            crop_width=(int(crop[0]) if crop else None),
            crop_height=(int(crop[1]) if crop else None),
        )


def load_augment_config(path: str | Path) -> AugmentConfig:
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"augment config not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return AugmentConfig.from_json(doc)


def builtin_augment_config(name: str) -> AugmentConfig:
    """Load a shipped preset ("umd_ours" or "choc_aff")."""
    ref = resources.files("affbench").joinpath(f"data/augment/{name}.json")
    try:
        doc = json.loads(ref.read_text())
    except FileNotFoundError as exc:
        raise MissingFile(f"no builtin augment config named '{name}'") from exc
    return AugmentConfig.from_json(doc)


def derive_rng(seed: int, sample_key: str, stage: str) -> np.random.Generator:
    """Counter-based generator keyed by (seed, sample_key, stage)."""
    payload = f"{seed}\x1f{sample_key}\x1f{stage}".encode()
    key = int.from_bytes(hashlib.blake2b(payload, digest_size=16).digest(), "little")
    return np.random.Generator(np.random.Philox(key=key))


def _check_aligned(image: RgbImage, mask: LabelMask) -> None:
    if (image.height, image.width) != (mask.height, mask.width):
        raise ShapeMismatch(
            f"image {image.width}x{image.height} vs mask {mask.width}x{mask.height}"
        )


def hflip(image: RgbImage, mask: LabelMask) -> tuple[RgbImage, LabelMask]:
    """Reverse column order in both image and mask."""
    _check_aligned(image, mask)
    return (
        RgbImage(image.pixels[:, ::-1].copy()),
        LabelMask(mask.labels[:, ::-1].copy(), mask.taxonomy),
    )


def scale_center_crop(
    image: RgbImage, mask: LabelMask, factor: float, crop_w: int, crop_h: int
) -> tuple[RgbImage, LabelMask]:
    """Upscale by factor >= 1 (bilinear image, nearest mask), then center-crop."""
    _check_aligned(image, mask)
    if factor < 1:
        raise InvalidFactor(f"scale factor must be >= 1, got {factor}")
    h2 = int(math.floor(image.height * factor + 0.5))
    w2 = int(math.floor(image.width * factor + 0.5))
    if crop_w > w2 or crop_h > h2:
        raise CropLargerThanScaled(
            f"crop {crop_w}x{crop_h} exceeds scaled size {w2}x{h2}"
        )
    img2 = resize_bilinear(image.pixels.astype(np.float64), h2, w2)
    img2 = np.clip(np.round(img2), 0, 255).astype(np.uint8)
    msk2 = resize_nearest(mask.labels, h2, w2)
    top = (h2 - crop_h) // 2
    left = (w2 - crop_w) // 2
    return (
        RgbImage(img2[top : top + crop_h, left : left + crop_w].copy()),
        LabelMask(msk2[top : top + crop_h, left : left + crop_w].copy(), mask.taxonomy),
    )


def _rgb_to_hsv(rgb: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    mx = rgb.max(axis=-1)
    mn = rgb.min(axis=-1)
    diff = mx - mn
    h = np.zeros_like(mx)
    nz = diff > 0
    rmax = nz & (mx == r)
    gmax = nz & (mx == g) & ~rmax
    bmax = nz & ~rmax & ~gmax
    h[rmax] = np.mod((g - b)[rmax] / diff[rmax], 6.0)
    h[gmax] = (b - r)[gmax] / diff[gmax] + 2.0
    h[bmax] = (r - g)[bmax] / diff[bmax] + 4.0
    h = h / 6.0
    s = np.divide(diff, mx, out=np.zeros_like(mx), where=mx > 0)
    return h, s, mx


def _hsv_to_rgb(h: np.ndarray, s: np.ndarray, v: np.ndarray) -> np.ndarray:
    i = np.floor(h * 6.0)
    f = h * 6.0 - i
    p = v * (1.0 - s)
    q = v * (1.0 - f * s)
    t = v * (1.0 - (1.0 - f) * s)
    i = i.astype(np.int64) % 6
    conds = [i == k for k in range(6)]
    r = np.select(conds, [v, q, p, p, t, v])
    g = np.select(conds, [t, v, v, q, p, p])
    b = np.select(conds, [p, p, t, v, v, q])
    return np.stack([r, g, b], axis=-1)


def color_jitter(
    image: RgbImage,
    brightness: float,
    contrast: float,
    saturation: float,
    hue_shift: float,
) -> RgbImage:
    """Multiply brightness, blend contrast with the image's gray mean, blend
    saturation with per-pixel luma, rotate hue by a fraction of the circle.

    Factors of exactly 1 (hue shift 0) leave the image untouched bit-for-bit.
    """
    if brightness < 0 or contrast < 0 or saturation < 0:
        raise InvalidFactor("jitter factors must be non-negative")
    if not -0.5 <= hue_shift <= 0.5:
        raise InvalidFactor(f"hue shift must be in [-0.5, 0.5], got {hue_shift}")
    x = image.pixels.astype(np.float64)
    if brightness != 1.0:
        x = x * brightness
    if contrast != 1.0:
        gray_mean = float((x @ _LUMA).mean())
        x = gray_mean + contrast * (x - gray_mean)
    if saturation != 1.0:
        luma = (x @ _LUMA)[..., None]
        x = luma + saturation * (x - luma)
    if hue_shift != 0.0:
        h, s, v = _rgb_to_hsv(np.clip(x, 0.0, 255.0) / 255.0)
        h = np.mod(h + hue_shift, 1.0)
        x = _hsv_to_rgb(h, s, v) * 255.0
    return RgbImage(np.clip(np.round(x), 0, 255).astype(np.uint8))


def add_gaussian_noise(image: RgbImage, variance: float, seed: int) -> RgbImage:
    """Add i.i.d. zero-mean Gaussian noise per channel, clamped to [0, 255]."""
    if variance < 0:
        raise NegativeVariance(f"variance must be >= 0, got {variance}")
    if variance == 0:
        return RgbImage(image.pixels.copy())
    rng = np.random.Generator(np.random.Philox(seed))
    noise = rng.normal(0.0, math.sqrt(variance), size=image.pixels.shape)
    out = image.pixels.astype(np.float64) + noise
    return RgbImage(np.clip(np.round(out), 0, 255).astype(np.uint8))


def augment_sample(
    image: RgbImage,
    mask: LabelMask,
    config: AugmentConfig,
    seed: int,
    sample_key: str,
) -> tuple[RgbImage, LabelMask]:
    """Apply flip, scale-then-center-crop, color jitter, and noise in order.

    A pure function of (inputs, config, seed, sample_key): repeated calls
    are bit-identical.
    """
    _check_aligned(image, mask)
    img, msk = image, mask

    if derive_rng(seed, sample_key, "flip").random() < config.flip_probability:
        img, msk = hflip(img, msk)

    factor = float(derive_rng(seed, sample_key, "scale").uniform(*config.scale_interval))
    crop_w = config.crop_width if config.crop_width is not None else img.width
    crop_h = config.crop_height if config.crop_height is not None else img.height
    img, msk = scale_center_crop(img, msk, factor, crop_w, crop_h)

    rng = derive_rng(seed, sample_key, "jitter")
    brightness = float(rng.uniform(*config.brightness_interval))
    contrast = float(rng.uniform(*config.contrast_interval))
    saturation = float(rng.uniform(*config.saturation_interval))
    hue_shift = float(rng.uniform(*config.hue_interval))
    img = color_jitter(img, brightness, contrast, saturation, hue_shift)

    if config.noise_variance_interval is not None:
        rng = derive_rng(seed, sample_key, "noise")
        variance = float(rng.uniform(*config.noise_variance_interval))
        img = add_gaussian_noise(img, variance, seed=int(rng.integers(0, 2**63)))

    return img, msk
