"""Label-preserving random image transforms applied during training.

Three transforms: horizontal flip, small rotation (bilinear, zero fill
outside the frame), and contrast scaling about the image mean.  Recipes:
photographic datasets get flip + rotation, the hand-written digits get
rotation + contrast.  Transforms run in the fixed order
flip -> rotate -> contrast; test data is never augmented.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class AugmentError(ValueError):
    pass


class AngleOutOfBounds(AugmentError):
    pass


class FactorOutOfBounds(AugmentError):
    pass


DEFAULT_MAX_ROTATION = 0.05  # radians
DEFAULT_CONTRAST_RANGE = (0.9, 1.1)


@dataclass(frozen=True)
class AugmentConfig:
    """Which transforms run, and their bounds."""

    flip_horizontal: bool = False
    rotation: bool = False
    contrast: bool = False
    max_rotation: float = DEFAULT_MAX_ROTATION
    contrast_range: tuple[float, float] = DEFAULT_CONTRAST_RANGE

    def __post_init__(self):
        if self.max_rotation < 0:
            raise AugmentError("max_rotation must be >= 0")
        lo, hi = self.contrast_range
        if not 0 < lo <= hi:
            raise AugmentError(f"bad contrast range {self.contrast_range}")

    @property
    def enabled(self) -> bool:
        return self.flip_horizontal or self.rotation or self.contrast


def preset(name: str) -> AugmentConfig:
    """Per-dataset recipe: digits rotate+contrast, photo sets flip+rotate."""
    recipes = {
        "none": AugmentConfig(),
        "digits": AugmentConfig(rotation=True, contrast=True),
        "fashion": AugmentConfig(flip_horizontal=True, rotation=True),
        "catdog": AugmentConfig(flip_horizontal=True, rotation=True),
    }
    if name not in recipes:
        raise AugmentError(f"unknown augmentation preset {name!r}; know {sorted(recipes)}")
    return recipes[name]


def flip_h(img: np.ndarray) -> np.ndarray:
    """Mirror left-right: pixel (x, y) -> (W-1-x, y)."""
    return np.ascontiguousarray(np.asarray(img)[:, ::-1])


def rotate(img: np.ndarray, angle: float, max_angle: float = DEFAULT_MAX_ROTATION) -> np.ndarray:
    """Rotate about the image center with bilinear interpolation.

    Samples falling outside the frame read as 0; output is clamped to [0, 1].
    """
    if abs(angle) > max_angle + 1e-12:
        raise AngleOutOfBounds(f"|{angle}| exceeds the {max_angle} radian bound")
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    ys, xs = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    # inverse map: source coordinates that land on each output pixel
    dy, dx = ys - cy, xs - cx
    c, s = np.cos(angle), np.sin(angle)
    src_x = cx + c * dx + s * dy
    src_y = cy - s * dx + c * dy

    x0 = np.floor(src_x).astype(int)
    y0 = np.floor(src_y).astype(int)
    fx, fy = src_x - x0, src_y - y0

    def sample(yy, xx):
        inside = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
        out = np.zeros_like(src_x)
        out[inside] = img[yy[inside], xx[inside]]
        return out

    out = ((1 - fy) * (1 - fx) * sample(y0, x0)
           + (1 - fy) * fx * sample(y0, x0 + 1)
           + fy * (1 - fx) * sample(y0 + 1, x0)
           + fy * fx * sample(y0 + 1, x0 + 1))
    return np.clip(out, 0.0, 1.0)


def contrast(img: np.ndarray, factor: float,
             factor_range: tuple[float, float] = DEFAULT_CONTRAST_RANGE) -> np.ndarray:
    """Scale deviations from the image mean by ``factor``, clamped to [0, 1]."""
    lo, hi = factor_range
    if not lo <= factor <= hi:
        raise FactorOutOfBounds(f"factor {factor} outside [{lo}, {hi}]")
    img = np.asarray(img, dtype=np.float64)
    mean = img.mean()
    return np.clip(mean + factor * (img - mean), 0.0, 1.0)


def augment_sample(img: np.ndarray, cfg: AugmentConfig, rng: np.random.Generator) -> np.ndarray:
    """One freshly randomized pass over the enabled transforms.

    Flip fires with probability 1/2; the angle and contrast factor are drawn
    uniformly from the configured bounds.  Disabled transforms draw nothing,
    so an all-disabled config returns the input bitwise.
    """
    if not cfg.enabled:
        return img
    out = np.asarray(img, dtype=np.float64)
    if cfg.flip_horizontal and rng.random() < 0.5:
        out = flip_h(out)
    if cfg.rotation:
        angle = rng.uniform(-cfg.max_rotation, cfg.max_rotation)
        out = rotate(out, angle, cfg.max_rotation)
    if cfg.contrast:
        lo, hi = cfg.contrast_range
        out = contrast(out, rng.uniform(lo, hi), cfg.contrast_range)
    return out
