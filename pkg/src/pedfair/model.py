"""Shared domain types: boxes, person attributes, weather, and audit-group predicates.

Everything here is immutable after construction and safe to share across
parallel workers. Serialization of corpora lives in :mod:`pedfair.corpus`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

MST_MIN = 1
MST_MAX = 10


class Gender(str, Enum):
    FEMALE = "female"
    MALE = "male"
    UNKNOWN = "unknown"


class BodySize(str, Enum):
    SMALL = "small"
    MEDIUM = "medium"
    LARGE = "large"
    UNKNOWN = "unknown"


class Lighting(str, Enum):
    WELL_LIT = "well_lit"
    DIMLY_LIT = "dimly_lit"
    OVEREXPOSED = "overexposed"
    UNDEREXPOSED = "underexposed"
    UNKNOWN = "unknown"


class WeatherKind(str, Enum):
    NONE = "none"
    FOG = "fog"
    RAIN = "rain"
    CLOUD = "cloud"
    AMBIENT_DARKNESS = "ambient_darkness"


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned pixel rectangle in (x, y, w, h) form, top-left origin."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self) -> None:
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"box sides must be positive, got w={self.w}, h={self.h}")

    @classmethod
    def from_corners(cls, x1: float, y1: float, x2: float, y2: float) -> "BoundingBox":
        """Build from (left, top, right, bottom) corner form."""
        return cls(x1, y1, x2 - x1, y2 - y1)

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    def area(self) -> float:
        return self.w * self.h


@dataclass(frozen=True)
class PersonAttributes:
    """Protected-attribute labels for one annotated person.

    ``skin_tones`` holds Monk Skin Tone values (1 lightest .. 10 darkest).
    More than one entry means the annotation was labeled as a spectrum; an
    empty set means skin tone was not annotated. The ``unknown`` enum values
    absorb missing labels rather than rejecting sparsely labeled records.
    """

    skin_tones: frozenset[int] = frozenset()
    gender: Gender = Gender.UNKNOWN
    body_size: BodySize = BodySize.UNKNOWN
    lighting: Lighting = Lighting.UNKNOWN

    def __post_init__(self) -> None:
        tones = frozenset(int(t) for t in self.skin_tones)
        for t in tones:
            if not MST_MIN <= t <= MST_MAX:
                raise ValueError(f"skin tone {t} outside {MST_MIN}..{MST_MAX}")
        object.__setattr__(self, "skin_tones", tones)


@dataclass(frozen=True)
class WeatherCondition:
    """Weather label for one image.

    ``intensity`` is severity in [0, 1] for fog/rain/cloud (0 = clear) and
    the darkness factor for ambient darkness (1 = original image, 0 = black).
    """

    kind: WeatherKind = WeatherKind.NONE
    intensity: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.intensity <= 1.0:
            raise ValueError(f"weather intensity {self.intensity} outside [0, 1]")


@dataclass(frozen=True)
class GroundTruthAnnotation:
    image_id: str
    box: BoundingBox
    attributes: PersonAttributes
    category: str = "person"


@dataclass(frozen=True)
class Detection:
    """A predicted box with class label and confidence score in [0, 1]."""

    image_id: str
    box: BoundingBox
    category: str
    confidence: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")


@dataclass(frozen=True)
class ImageRecord:
    """Image metadata plus optional 8-bit pixel grid (H x W x C, uint8).

    ``pixel_data`` is only populated when pixel augmentation is requested.
    The array is treated as immutable; transforms return new records.
    """

    image_id: str
    width: int
    height: int
    weather: WeatherCondition = WeatherCondition()
    file_name: str | None = None
    pixel_data: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise ValueError(
                f"image dimensions must be positive, got {self.width}x{self.height}"
            )


@dataclass(frozen=True)
class GroupSpec:
    """Conjunction of attribute and weather predicates naming one audit group.

    Each non-None field is one predicate; all present predicates must hold
    for membership. ``skin_tones`` uses any-member semantics: an annotation
    labeled with a spectrum counts toward every group whose allowed set
    intersects it. At least one predicate must be present.
    """

    name: str
    skin_tones: frozenset[int] | None = None
    gender: Gender | None = None
    body_size: BodySize | None = None
    lighting: frozenset[Lighting] | None = None
    weather_kind: WeatherKind | None = None
    intensity_range: tuple[float, float] | None = None

    def __post_init__(self) -> None:
        if self.skin_tones is not None:
            object.__setattr__(self, "skin_tones", frozenset(int(t) for t in self.skin_tones))
            if not self.skin_tones:
                raise ValueError("skin_tones predicate must be non-empty")
        if self.lighting is not None:
            object.__setattr__(self, "lighting", frozenset(Lighting(v) for v in self.lighting))
            if not self.lighting:
                raise ValueError("lighting predicate must be non-empty")
        if self.intensity_range is not None:
            lo, hi = self.intensity_range
            if not (0.0 <= lo <= hi <= 1.0):
                raise ValueError(f"intensity_range {self.intensity_range} invalid")
            object.__setattr__(self, "intensity_range", (float(lo), float(hi)))
        if all(
            p is None
            for p in (
                self.skin_tones,
                self.gender,
                self.body_size,
                self.lighting,
                self.weather_kind,
                self.intensity_range,
            )
        ):
            raise ValueError(f"group spec {self.name!r} has no predicates")

    def matches_attributes(self, attrs: PersonAttributes) -> bool:
        if self.skin_tones is not None and not (self.skin_tones & attrs.skin_tones):
            return False
        if self.gender is not None and attrs.gender != self.gender:
            return False
        if self.body_size is not None and attrs.body_size != self.body_size:
            return False
        if self.lighting is not None and attrs.lighting not in self.lighting:
            return False
        return True

    def matches_weather(self, weather: WeatherCondition) -> bool:
        if self.weather_kind is not None and weather.kind != self.weather_kind:
            return False
        if self.intensity_range is not None:
            lo, hi = self.intensity_range
            if not lo <= weather.intensity <= hi:
                return False
        return True

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "skin_tones": sorted(self.skin_tones) if self.skin_tones is not None else None,
            "gender": self.gender.value if self.gender is not None else None,
            "body_size": self.body_size.value if self.body_size is not None else None,
            "lighting": sorted(v.value for v in self.lighting) if self.lighting is not None else None,
            "weather_kind": self.weather_kind.value if self.weather_kind is not None else None,
            "intensity_range": list(self.intensity_range) if self.intensity_range is not None else None,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GroupSpec":
        known = {
            "name",
            "skin_tones",
            "gender",
            "body_size",
            "lighting",
            "weather_kind",
            "intensity_range",
        }
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown group spec keys: {sorted(unknown)}")
        if "name" not in data or not data["name"]:
            raise ValueError("group spec requires a name")

        def opt(key, conv):
            value = data.get(key)
            return None if value is None else conv(value)

        return cls(
            name=str(data["name"]),
            skin_tones=opt("skin_tones", frozenset),
            gender=opt("gender", Gender),
            body_size=opt("body_size", BodySize),
            lighting=opt("lighting", lambda v: frozenset([v]) if isinstance(v, str) else frozenset(v)),
            weather_kind=opt("weather_kind", WeatherKind),
            intensity_range=opt("intensity_range", tuple),
        )


def group_membership(
    annotation: GroundTruthAnnotation, image: ImageRecord, spec: GroupSpec
) -> bool:
    """True iff the annotation and its image satisfy every predicate of ``spec``."""
    if annotation.image_id != image.image_id:
        raise ValueError(
            f"annotation image {annotation.image_id!r} does not match image {image.image_id!r}"
        )
    return spec.matches_attributes(annotation.attributes) and spec.matches_weather(image.weather)
