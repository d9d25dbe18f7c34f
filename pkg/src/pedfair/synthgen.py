"""Seeded synthetic corpus generator with parametric detector degradation.

Stands in for a simulator-plus-detector pipeline so that end-to-end trend
tests run offline. Ground-truth pedestrians are placed with box sizes
cycling through the three distance bins; each one emits a slightly jittered
detection unless it is "missed", plus hallucinated boxes appear at a
configured rate. Degradation is parametric and monotone:

* miss probability  ``m = m0 + slope * severity * (1 - m0)`` with
  ``m0 = clamp(miss_base * group_miss_mult)``, so misses rise toward 1 and
  inter-group gaps shrink as weather worsens;
* detection confidence
  ``clamp(base * group_conf_mult * exp(-fog_decay * severity
  - distance_decay / box_area) + noise)``, so confidence decays with both
  weather severity and distance (small boxes), again with converging groups.

Everything is a pure function of (config, scenario, seed): image i under
weather step w uses its own generator seeded by (seed, w, i), so generation
could be partitioned across workers without changing the output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .corpus import Corpus
from .model import (
    BodySize,
    BoundingBox,
    Detection,
    Gender,
    GroundTruthAnnotation,
    ImageRecord,
    Lighting,
    PersonAttributes,
    WeatherCondition,
    WeatherKind,
)

# Target box areas per distance bin, kept clear of the bin edges so jitter
# cannot move a ground truth across bins.
_BIN_AREAS = ((130.0, 950.0), (1300.0, 8800.0), (9600.0, 36000.0))


@dataclass(frozen=True)
class GroupModifier:
    """Per-pedestrian-type multipliers on confidence and miss probability."""

    confidence: float = 1.0
    miss: float = 1.0

    def __post_init__(self) -> None:
        if self.confidence < 0 or self.miss < 0:
            raise ValueError("group modifiers must be non-negative")


@dataclass(frozen=True)
class DegradationConfig:
    base_confidence: float = 0.9
    fog_decay: float = 0.0
    distance_decay: float = 0.0
    miss_base: float = 0.0
    miss_fog_slope: float = 0.0
    hallucination_rate: float = 0.0
    confidence_noise_sd: float = 0.0
    group_modifiers: Mapping[str, GroupModifier] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not 0.0 < self.base_confidence <= 1.0:
            raise ValueError(f"base_confidence {self.base_confidence} outside (0, 1]")
        if not 0.0 <= self.miss_base < 1.0:
            raise ValueError(f"miss_base {self.miss_base} outside [0, 1)")
        for name in ("fog_decay", "distance_decay", "miss_fog_slope",
                     "hallucination_rate", "confidence_noise_sd"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    def modifier(self, label: str) -> GroupModifier:
        return self.group_modifiers.get(label, GroupModifier())


@dataclass(frozen=True)
class PedestrianType:
    label: str
    attributes: PersonAttributes


@dataclass(frozen=True)
class Scenario:
    """Image counts, pedestrian mix, and the weather ladder to sweep."""

    n_images: int
    pedestrians_per_image: int
    pedestrian_types: tuple[PedestrianType, ...]
    weather: tuple[WeatherCondition, ...]
    image_width: int = 1280
    image_height: int = 960

    def __post_init__(self) -> None:
        if self.n_images <= 0:
            raise ValueError("n_images must be positive")
        if self.pedestrians_per_image < 0:
            raise ValueError("pedestrians_per_image must be non-negative")
        if self.pedestrians_per_image > 0 and not self.pedestrian_types:
            raise ValueError("pedestrian_types must be non-empty")
        if not self.weather:
            raise ValueError("weather ladder must be non-empty")
        if self.image_width < 400 or self.image_height < 400:
            raise ValueError("image must be at least 400x400 to fit all box sizes")


def weather_severity(weather: WeatherCondition) -> float:
    """Degradation severity in [0, 1]: 0 clear, 1 worst.

    For ambient darkness the stored intensity is the darkness factor
    (1 = original image), so severity is its complement.
    """
    if weather.kind == WeatherKind.NONE:
        return 0.0
    if weather.kind == WeatherKind.AMBIENT_DARKNESS:
        return 1.0 - weather.intensity
    return weather.intensity


def miss_probability(config: DegradationConfig, severity: float, label: str) -> float:
    base = min(1.0, config.miss_base * config.modifier(label).miss)
    slope = min(1.0, config.miss_fog_slope * severity)
    return base + slope * (1.0 - base)


def expected_confidence(
    config: DegradationConfig, severity: float, label: str, area: float
) -> float:
    """Noise-free detection confidence for a box of the given area."""
    raw = (
        config.base_confidence
        * config.modifier(label).confidence
        * math.exp(-config.fog_decay * severity - config.distance_decay / area)
    )
    return min(1.0, max(0.0, raw))


def _sample_box(rng: np.random.Generator, bin_index: int, width: int, height: int) -> BoundingBox:
    lo, hi = _BIN_AREAS[bin_index]
    area = rng.uniform(lo, hi)
    aspect = rng.uniform(1.6, 3.2)  # pedestrians are taller than wide
    h = math.sqrt(area * aspect)
    w = area / h
    x = rng.uniform(0.0, width - w)
    y = rng.uniform(0.0, height - h)
    return BoundingBox(x, y, w, h)


def _jitter_box(rng: np.random.Generator, box: BoundingBox, width: int, height: int) -> BoundingBox:
    # Bounded jitter keeps IoU with the source box above ~0.8, so a
    # non-missed detection always clears the 0.5 matching threshold.
    sx = rng.uniform(0.95, 1.05)
    sy = rng.uniform(0.95, 1.05)
    dx = rng.uniform(-0.03, 0.03) * box.w
    dy = rng.uniform(-0.03, 0.03) * box.h
    x1 = min(max(box.x + dx, 0.0), float(width) - 1.0)
    y1 = min(max(box.y + dy, 0.0), float(height) - 1.0)
    w = min(box.w * sx, width - x1)
    h = min(box.h * sy, height - y1)
    return BoundingBox(x1, y1, w, h)


def generate(
    config: DegradationConfig, scenario: Scenario, seed: int
) -> tuple[Corpus, list[Detection]]:
    """Generate an attributed corpus and matching degraded detections.

    Produces ``scenario.n_images`` images per weather step. Output is a pure
    function of (config, scenario, seed).
    """
    images: dict[str, ImageRecord] = {}
    annotations: list[GroundTruthAnnotation] = []
    detections: list[Detection] = []
    types = scenario.pedestrian_types
    width, height = scenario.image_width, scenario.image_height

    for w_idx, weather in enumerate(scenario.weather):
        severity = weather_severity(weather)
        for i in range(scenario.n_images):
            rng = np.random.default_rng([seed, w_idx, i])
            image_id = f"synth-w{w_idx:02d}-{i:06d}"
            images[image_id] = ImageRecord(
                image_id=image_id, width=width, height=height, weather=weather
            )
            for p in range(scenario.pedestrians_per_image):
                ped_type = types[rng.integers(0, len(types))]
                bin_index = (i * scenario.pedestrians_per_image + p) % 3
                box = _sample_box(rng, bin_index, width, height)
                annotations.append(
                    GroundTruthAnnotation(
                        image_id=image_id, box=box, attributes=ped_type.attributes
                    )
                )
                if rng.random() < miss_probability(config, severity, ped_type.label):
                    continue
                conf = expected_confidence(config, severity, ped_type.label, box.area())
                if config.confidence_noise_sd > 0:
                    conf += rng.normal(0.0, config.confidence_noise_sd)
                conf = min(1.0, max(0.0, conf))
                detections.append(
                    Detection(
                        image_id=image_id,
                        box=_jitter_box(rng, box, width, height),
                        category="person",
                        confidence=conf,
                    )
                )
            for _ in range(rng.poisson(config.hallucination_rate)):
                bin_index = int(rng.integers(0, 3))
                fp_box = _sample_box(rng, bin_index, width, height)
                fp_conf = rng.uniform(0.05, 0.6)
                detections.append(
                    Detection(
                        image_id=image_id, box=fp_box, category="person", confidence=float(fp_conf)
                    )
                )

    provenance = [
        "synthgen(seed={}, images={}x{}, pedestrians={}, types={})".format(
            seed,
            len(scenario.weather),
            scenario.n_images,
            scenario.pedestrians_per_image,
            [t.label for t in types],
        )
    ]
    corpus = Corpus(images=images, annotations=annotations, provenance=provenance)
    return corpus, detections


def scenario_from_dict(data: dict) -> Scenario:
    """Build a scenario from its JSON form (see the synth config section)."""
    types = []
    for entry in data.get("types", []):
        types.append(
            PedestrianType(
                label=str(entry["label"]),
                attributes=PersonAttributes(
                    skin_tones=frozenset(entry.get("skin_tones", [])),
                    gender=Gender(entry.get("gender", "unknown")),
                    body_size=BodySize(entry.get("body_size", "unknown")),
                    lighting=Lighting(entry.get("lighting", "unknown")),
                ),
            )
        )
    weather = tuple(
        WeatherCondition(kind=WeatherKind(w.get("kind", "none")), intensity=float(w.get("intensity", 0.0)))
        for w in data.get("weather", [])
    )
    return Scenario(
        n_images=int(data["n_images"]),
        pedestrians_per_image=int(data.get("pedestrians_per_image", 1)),
        pedestrian_types=tuple(types),
        weather=weather,
        image_width=int(data.get("image_width", 1280)),
        image_height=int(data.get("image_height", 960)),
    )


def degradation_from_dict(data: dict) -> DegradationConfig:
    modifiers = {
        label: GroupModifier(
            confidence=float(entry.get("confidence", 1.0)),
            miss=float(entry.get("miss", 1.0)),
        )
        for label, entry in data.get("group_modifiers", {}).items()
    }
    return DegradationConfig(
        base_confidence=float(data.get("base_confidence", 0.9)),
        fog_decay=float(data.get("fog_decay", 0.0)),
        distance_decay=float(data.get("distance_decay", 0.0)),
        miss_base=float(data.get("miss_base", 0.0)),
        miss_fog_slope=float(data.get("miss_fog_slope", 0.0)),
        hallucination_rate=float(data.get("hallucination_rate", 0.0)),
        confidence_noise_sd=float(data.get("confidence_noise_sd", 0.0)),
        group_modifiers=modifiers,
    )
