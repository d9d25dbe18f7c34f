"""Ambient-darkness augmentation: scale pixel values by a factor in [0, 1].

A factor of 1 leaves the image untouched and 0 blacks it out. Scaling is
round-half-up on the exact decimal value of the factor (0.7 means 7/10, not
the nearest binary float), computed through a 256-entry lookup table so the
result is bit-exact across platforms and fast on full images. The transform
works directly on stored 8-bit values; it mimics low ambient light, it is
not a radiometric model.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image

from .corpus import Corpus
from .model import ImageRecord, WeatherCondition, WeatherKind

log = logging.getLogger(__name__)

#: Factors 0.0, 0.1, ..., 1.0.
DEFAULT_FACTOR_LADDER: tuple[float, ...] = tuple(round(0.1 * i, 1) for i in range(11))


@dataclass(frozen=True)
class DarknessFactor:
    """Pixel multiplier in [0, 1]; 1 keeps the original image, 0 is black."""

    value: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.value <= 1.0:
            raise ValueError(f"darkness factor {self.value} outside [0, 1]")


def _as_factor(factor: DarknessFactor | float) -> DarknessFactor:
    if isinstance(factor, DarknessFactor):
        return factor
    return DarknessFactor(float(factor))


def scale_lut(factor: DarknessFactor | float) -> np.ndarray:
    """256-entry uint8 table mapping v -> round-half-up(v * factor).

    The factor is interpreted as the decimal its repr prints (e.g. 0.7 is
    exactly 7/10), and the rounding is done in integer arithmetic, so the
    table is exact.
    """
    value = _as_factor(factor).value
    frac = Fraction(str(value))
    p, q = frac.numerator, frac.denominator
    table = [min(255, (2 * v * p + q) // (2 * q)) for v in range(256)]
    return np.array(table, dtype=np.uint8)


def apply_darkness(image: ImageRecord, factor: DarknessFactor | float) -> ImageRecord:
    """Scale every channel value of the image by the darkness factor.

    Geometry and annotations are untouched; the record's weather becomes
    ambient darkness with the factor recorded as its intensity.
    """
    factor = _as_factor(factor)
    if image.pixel_data is None:
        raise ValueError(f"image {image.image_id!r} has no pixel data")
    pixels = np.asarray(image.pixel_data)
    if pixels.dtype != np.uint8:
        info = np.iinfo(pixels.dtype) if np.issubdtype(pixels.dtype, np.integer) else None
        if info is None or pixels.min() < 0 or pixels.max() > 255:
            raise ValueError("pixel data must be 8-bit integer channel values in [0, 255]")
        pixels = pixels.astype(np.uint8)
    darkened = scale_lut(factor)[pixels]
    return replace(
        image,
        pixel_data=darkened,
        weather=WeatherCondition(kind=WeatherKind.AMBIENT_DARKNESS, intensity=factor.value),
    )


def darkness_sweep(
    corpus: Corpus,
    factors: Sequence[DarknessFactor | float] = DEFAULT_FACTOR_LADDER,
) -> list[tuple[float, Corpus]]:
    """One augmented corpus per factor, each with provenance annotated."""
    if len(factors) == 0:
        raise ValueError("factor ladder must be non-empty")
    out = []
    for factor in factors:
        factor = _as_factor(factor)
        images = {i: apply_darkness(img, factor) for i, img in corpus.images.items()}
        step = f"apply_darkness(factor={factor.value})"
        out.append(
            (
                factor.value,
                Corpus(
                    images=images,
                    annotations=list(corpus.annotations),
                    provenance=corpus.provenance + [step],
                ),
            )
        )
    return out


def darkened_name(file_name: str, factor: DarknessFactor | float) -> str:
    """Suffix a file name with the factor, e.g. img.png -> img_d0.4.png."""
    path = Path(file_name)
    return f"{path.stem}_d{_as_factor(factor).value}{path.suffix}"


def read_pixels(path: str | Path) -> np.ndarray:
    """Load an image file as an 8-bit RGB array (H x W x 3)."""
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"), dtype=np.uint8)


def write_pixels(path: str | Path, pixels: np.ndarray) -> None:
    """Write an 8-bit RGB array losslessly (format from the file suffix)."""
    Image.fromarray(np.asarray(pixels, dtype=np.uint8)).save(path)
