"""Image loading, normalisation and training-time augmentation.

Images are ``H x W x 3`` float32 arrays with RGB values in ``[0, 1]``.
"""

from dataclasses import asdict, dataclass, fields

import numpy as np
from PIL import Image, UnidentifiedImageError
from scipy import ndimage

from ._resize import bilinear_resize
from .errors import LeafscopeError

# canonical on-disk preprocessing side; model input side is per backbone
PREPROCESS_SIDE = 256


class ImageDecodeError(LeafscopeError):
    pass


def normalize(raw):
    """Map 8-bit pixel values to ``[0, 1]``."""
    raw = np.asarray(raw)
    if raw.size and (raw.min() < 0 or raw.max() > 255):
        raise ValueError("8-bit image values must lie in [0, 255]")
    return raw.astype(np.float32) / np.float32(255.0)


def denormalize(image):
    return np.clip(np.rint(np.asarray(image, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def load_image(path):
    """Decode an image file to an RGB ``uint8`` array; grayscale is replicated to 3 channels."""
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("RGB"))
    except (OSError, UnidentifiedImageError) as exc:
        raise ImageDecodeError(f"cannot decode image {path}: {exc}") from exc


def load_and_resize(path, side):
    """Load ``path`` as a ``side x side x 3`` image in ``[0, 1]``.

    Plain square bilinear resize, aspect ratio is not preserved.
    """
    try:
        with Image.open(path) as im:
            im = im.convert("RGB")
            if im.size != (side, side):
                im = im.resize((side, side), Image.BILINEAR)
            raw = np.asarray(im)
    except (OSError, UnidentifiedImageError) as exc:
        raise ImageDecodeError(f"cannot decode image {path}: {exc}") from exc
    return normalize(raw)


def resize_image(image, side):
    return np.clip(bilinear_resize(np.asarray(image, dtype=np.float32), (side, side)), 0.0, 1.0)


@dataclass(frozen=True)
class AugmentationConfig:
    rotation_degrees: float = 20.0
    hflip_probability: float = 0.5
    crop_area_fraction: float = 0.9
    brightness_delta: float = 0.2
    contrast_range: tuple = (0.8, 1.2)
    rotate: bool = True
    hflip: bool = True
    crop: bool = True
    brightness: bool = True
    contrast: bool = True

    def __post_init__(self):
        object.__setattr__(self, "contrast_range", tuple(self.contrast_range))
        if not 0 <= self.rotation_degrees <= 180:
            raise ValueError("rotation_degrees must lie in [0, 180]")
        if not 0 <= self.hflip_probability <= 1:
            raise ValueError("hflip_probability must lie in [0, 1]")
        if not 0 < self.crop_area_fraction <= 1:
            raise ValueError("crop_area_fraction must lie in (0, 1]")
        if not 0 <= self.brightness_delta < 1:
            raise ValueError("brightness_delta must lie in [0, 1)")
        lo, hi = self.contrast_range
        if not 0 < lo <= hi:
            raise ValueError("contrast_range must be positive with lower <= upper")

    @classmethod
    def disabled(cls):
        return cls(rotate=False, hflip=False, crop=False, brightness=False, contrast=False)

    def to_dict(self):
        d = asdict(self)
        d["contrast_range"] = list(self.contrast_range)
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown augmentation keys: {sorted(unknown)}")
        return cls(**d)


def rotate(image, degrees):
    if degrees == 0:
        return image.copy()
    out = ndimage.rotate(image, degrees, axes=(1, 0), reshape=False, order=1, mode="reflect")
    return out.astype(image.dtype, copy=False)


def hflip(image):
    return image[:, ::-1].copy()


def random_crop(image, area_fraction, rng):
    """Crop a window covering at least ``area_fraction`` of the image, then resize back."""
    h, w = image.shape[:2]
    keep = np.sqrt(rng.uniform(area_fraction, 1.0))
    ch = min(h, max(1, int(np.ceil(keep * h))))
    cw = min(w, max(1, int(np.ceil(keep * w))))
    top = int(rng.integers(0, h - ch + 1))
    left = int(rng.integers(0, w - cw + 1))
    window = image[top:top + ch, left:left + cw]
    return bilinear_resize(np.ascontiguousarray(window), (h, w)).astype(image.dtype, copy=False)


def adjust_brightness(image, delta):
    return image + np.float32(delta)


def adjust_contrast(image, factor):
    mean = image.mean()
    return (image - mean) * np.float32(factor) + mean


def augment(image, config, rng):
    """Random rotation, flip, crop, brightness and contrast, then clamp to ``[0, 1]``.

    ``rng`` is a :class:`numpy.random.Generator`; disabled transforms draw
    no random numbers.  Shape is preserved.
    """
    out = np.array(image, dtype=np.float32, copy=True)
    if config.rotate and config.rotation_degrees > 0:
        out = rotate(out, rng.uniform(-config.rotation_degrees, config.rotation_degrees))
    if config.hflip and rng.random() < config.hflip_probability:
        out = hflip(out)
    if config.crop and config.crop_area_fraction < 1:
        out = random_crop(out, config.crop_area_fraction, rng)
    if config.brightness and config.brightness_delta > 0:
        out = adjust_brightness(out, rng.uniform(-config.brightness_delta, config.brightness_delta))
    if config.contrast:
        out = adjust_contrast(out, rng.uniform(*config.contrast_range))
    return np.clip(out, 0.0, 1.0)
