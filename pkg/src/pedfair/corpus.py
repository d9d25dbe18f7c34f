"""Corpus ingestion, curation filters, and the distance-bin proxy.

The ground-truth file is JSON with an ``images`` list (id, file_name, width,
height, weather{kind, intensity}) and an ``annotations`` list (id, image_id,
bbox [x, y, w, h], attributes{skin_tones, gender, body_size, lighting}).
Detection files are a flat JSON array of {image_id, category, bbox, score}.
Malformed records are skipped with a diagnostic naming the record; files
that do not parse raise :class:`LoadError`.

Curation operations are pure corpus -> corpus functions. Each one appends a
description of what it did (including any seed) to the corpus provenance, so
a curated corpus carries its full audit trail.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

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

log = logging.getLogger(__name__)

# Box-area cutoffs for the distance proxy: below 32^2 px is treated as far
# away, above 96^2 px as close to the camera.
SMALL_AREA_MAX = 32 * 32
MEDIUM_AREA_MAX = 96 * 96


class DistanceBin(str, Enum):
    FARTHER = "farther"
    MIDWAY = "midway"
    CLOSER = "closer"


class LoadError(Exception):
    """A corpus or detection file could not be read or parsed."""


class _RecordError(Exception):
    """One record is malformed; the load continues without it."""


@dataclass
class Corpus:
    """Attributed ground truth: images, annotations, and an audit trail."""

    images: dict[str, ImageRecord] = field(default_factory=dict)
    annotations: list[GroundTruthAnnotation] = field(default_factory=list)
    provenance: list[str] = field(default_factory=list)

    def annotations_by_image(self) -> dict[str, list[GroundTruthAnnotation]]:
        out: dict[str, list[GroundTruthAnnotation]] = {i: [] for i in self.images}
        for ann in self.annotations:
            out[ann.image_id].append(ann)
        return out


def distance_bin(box: BoundingBox) -> DistanceBin:
    """Classify a box as farther/midway/closer from its pixel area."""
    area = box.area()
    if area < SMALL_AREA_MAX:
        return DistanceBin.FARTHER
    if area < MEDIUM_AREA_MAX:
        return DistanceBin.MIDWAY
    return DistanceBin.CLOSER


def _read_json(path: str | Path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise LoadError(f"{path}: {exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise LoadError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc


def _clamped_box(raw, width: int, height: int) -> BoundingBox:
    if not isinstance(raw, (list, tuple)) or len(raw) != 4:
        raise _RecordError(f"bbox must be [x, y, w, h], got {raw!r}")
    x, y, w, h = (float(v) for v in raw)
    if w <= 0 or h <= 0:
        raise _RecordError(f"non-positive box size w={w}, h={h}")
    x1 = min(max(x, 0.0), float(width))
    y1 = min(max(y, 0.0), float(height))
    x2 = min(max(x + w, 0.0), float(width))
    y2 = min(max(y + h, 0.0), float(height))
    if x2 - x1 <= 0 or y2 - y1 <= 0:
        raise _RecordError("box lies entirely outside the image")
    return BoundingBox(x1, y1, x2 - x1, y2 - y1)


def _parse_enum(entry: dict, key: str, enum_cls, default):
    value = entry.get(key)
    if value is None:
        return default
    try:
        return enum_cls(value)
    except ValueError as exc:
        raise _RecordError(f"bad {key} value {value!r}") from exc


def _parse_weather(entry) -> WeatherCondition:
    if entry is None:
        return WeatherCondition()
    kind = _parse_enum(entry, "kind", WeatherKind, WeatherKind.NONE)
    intensity = float(entry.get("intensity", 0.0))
    try:
        return WeatherCondition(kind=kind, intensity=intensity)
    except ValueError as exc:
        raise _RecordError(str(exc)) from exc


def _parse_image(entry: dict) -> ImageRecord:
    if "id" not in entry:
        raise _RecordError("missing id")
    try:
        width = int(entry["width"])
        height = int(entry["height"])
    except (KeyError, TypeError, ValueError) as exc:
        raise _RecordError(f"bad width/height: {exc}") from exc
    weather = _parse_weather(entry.get("weather"))
    try:
        return ImageRecord(
            image_id=str(entry["id"]),
            width=width,
            height=height,
            weather=weather,
            file_name=entry.get("file_name"),
        )
    except ValueError as exc:
        raise _RecordError(str(exc)) from exc


def _parse_attributes(entry) -> PersonAttributes:
    if entry is None:
        return PersonAttributes()
    tones = entry.get("skin_tones") or []
    try:
        return PersonAttributes(
            skin_tones=frozenset(int(t) for t in tones),
            gender=_parse_enum(entry, "gender", Gender, Gender.UNKNOWN),
            body_size=_parse_enum(entry, "body_size", BodySize, BodySize.UNKNOWN),
            lighting=_parse_enum(entry, "lighting", Lighting, Lighting.UNKNOWN),
        )
    except ValueError as exc:
        raise _RecordError(str(exc)) from exc


def _parse_annotation(entry: dict, images: dict[str, ImageRecord]) -> GroundTruthAnnotation:
    image_id = str(entry.get("image_id"))
    if image_id not in images:
        raise _RecordError(f"unknown image_id {image_id!r}")
    image = images[image_id]
    box = _clamped_box(entry.get("bbox"), image.width, image.height)
    attrs = _parse_attributes(entry.get("attributes"))
    return GroundTruthAnnotation(image_id=image_id, box=box, attributes=attrs)


def _parse_detection(entry: dict, images: dict[str, ImageRecord]) -> Detection:
    image_id = str(entry.get("image_id"))
    if image_id not in images:
        raise _RecordError(f"unknown image_id {image_id!r}")
    image = images[image_id]
    if "category" not in entry:
        raise _RecordError("missing category")
    try:
        score = float(entry["score"])
    except (KeyError, TypeError, ValueError) as exc:
        raise _RecordError(f"bad score: {exc}") from exc
    box = _clamped_box(entry.get("bbox"), image.width, image.height)
    try:
        return Detection(
            image_id=image_id, box=box, category=str(entry["category"]), confidence=score
        )
    except ValueError as exc:
        raise _RecordError(str(exc)) from exc


def load(
    annotation_path: str | Path, detection_path: str | Path | None = None
) -> tuple[Corpus, list[Detection]]:
    """Read a ground-truth file and (optionally) a detection file.

    Boxes are clamped to image bounds on ingest. Records that fail to parse
    are skipped with a warning naming the offending entry; referential
    problems (annotations or detections pointing at unknown images) drop the
    record the same way.
    """
    raw = _read_json(annotation_path)
    if not isinstance(raw, dict) or "images" not in raw or "annotations" not in raw:
        raise LoadError(f"{annotation_path}: expected an object with 'images' and 'annotations'")

    images: dict[str, ImageRecord] = {}
    for idx, entry in enumerate(raw["images"]):
        try:
            rec = _parse_image(entry)
        except _RecordError as exc:
            log.warning("%s: images[%d]: %s; record skipped", annotation_path, idx, exc)
            continue
        if rec.image_id in images:
            log.warning(
                "%s: images[%d]: duplicate image id %r; record skipped",
                annotation_path,
                idx,
                rec.image_id,
            )
            continue
        images[rec.image_id] = rec

    annotations: list[GroundTruthAnnotation] = []
    for idx, entry in enumerate(raw["annotations"]):
        try:
            annotations.append(_parse_annotation(entry, images))
        except _RecordError as exc:
            log.warning(
                "%s: annotations[%d] (id=%s): %s; record skipped",
                annotation_path,
                idx,
                entry.get("id"),
                exc,
            )

    provenance = [str(step) for step in raw.get("provenance", [])]
    provenance.append(
        f"load({Path(annotation_path).name}): {len(images)} images, "
        f"{len(annotations)} annotations"
    )
    corpus = Corpus(images=images, annotations=annotations, provenance=provenance)

    detections: list[Detection] = []
    if detection_path is not None:
        det_raw = _read_json(detection_path)
        if not isinstance(det_raw, list):
            raise LoadError(f"{detection_path}: expected a JSON array of detections")
        for idx, entry in enumerate(det_raw):
            try:
                detections.append(_parse_detection(entry, images))
            except _RecordError as exc:
                log.warning("%s: [%d]: %s; record skipped", detection_path, idx, exc)
    return corpus, detections


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    """Write a corpus back to the ground-truth JSON schema (with provenance)."""
    images_out = []
    for image_id in sorted(corpus.images):
        img = corpus.images[image_id]
        entry = {
            "id": img.image_id,
            "width": img.width,
            "height": img.height,
            "weather": {"kind": img.weather.kind.value, "intensity": img.weather.intensity},
        }
        if img.file_name is not None:
            entry["file_name"] = img.file_name
        images_out.append(entry)
    annotations_out = []
    for idx, ann in enumerate(corpus.annotations):
        annotations_out.append(
            {
                "id": idx,
                "image_id": ann.image_id,
                "category": ann.category,
                "bbox": [ann.box.x, ann.box.y, ann.box.w, ann.box.h],
                "attributes": {
                    "skin_tones": sorted(ann.attributes.skin_tones),
                    "gender": ann.attributes.gender.value,
                    "body_size": ann.attributes.body_size.value,
                    "lighting": ann.attributes.lighting.value,
                },
            }
        )
    payload = {
        "images": images_out,
        "annotations": annotations_out,
        "provenance": list(corpus.provenance),
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def save_detections(detections: list[Detection], path: str | Path) -> None:
    """Write detections as a flat JSON array of {image_id, category, bbox, score}."""
    payload = [
        {
            "image_id": d.image_id,
            "category": d.category,
            "bbox": [d.box.x, d.box.y, d.box.w, d.box.h],
            "score": d.confidence,
        }
        for d in detections
    ]
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


_ATTRIBUTE_KEYS = ("skin_tone", "gender", "body_size")


def _check_attribute_key(attribute_key: str) -> None:
    if attribute_key not in _ATTRIBUTE_KEYS:
        raise ValueError(
            f"attribute_key must be one of {_ATTRIBUTE_KEYS}, got {attribute_key!r}"
        )


def _attribute_value(ann: GroundTruthAnnotation, attribute_key: str):
    if attribute_key == "skin_tone":
        return ann.attributes.skin_tones
    if attribute_key == "gender":
        return ann.attributes.gender
    return ann.attributes.body_size


def curate_single_attribute(corpus: Corpus, attribute_key: str) -> Corpus:
    """Keep only images whose annotations all carry the same attribute value.

    For skin tone the whole value set must be identical, so a spectrum label
    like {2, 3} does not count as uniform with {2}. This is what makes false
    positives attributable to a single group: every retained image belongs
    entirely to one value of the attribute. Images without annotations are
    vacuously uniform and retained.
    """
    _check_attribute_key(attribute_key)
    by_image = corpus.annotations_by_image()
    kept: set[str] = set()
    for image_id, anns in by_image.items():
        values = {_attribute_value(a, attribute_key) for a in anns}
        if len(values) <= 1:
            kept.add(image_id)
    images = {i: corpus.images[i] for i in sorted(kept)}
    annotations = [a for a in corpus.annotations if a.image_id in kept]
    step = (
        f"curate_single_attribute({attribute_key}): kept {len(images)}/{len(corpus.images)} images"
    )
    log.info("%s", step)
    return Corpus(images=images, annotations=annotations, provenance=corpus.provenance + [step])


def subsample_equal(corpus: Corpus, attribute_key: str, n: int, seed: int) -> Corpus:
    """Sample up to ``n`` images per observed attribute value, without replacement.

    An image is a candidate for value v when any of its annotations carries
    v (for skin tone: v appears in the annotation's tone set). Values with
    fewer than ``n`` candidate images are taken whole with a warning. The
    selection is reproducible bit-exactly for a fixed seed.
    """
    if n <= 0:
        raise ValueError(f"sample size must be positive, got {n}")
    _check_attribute_key(attribute_key)

    candidates: dict[object, set[str]] = {}
    for ann in corpus.annotations:
        value = _attribute_value(ann, attribute_key)
        if attribute_key == "skin_tone":
            for tone in value:
                candidates.setdefault(tone, set()).add(ann.image_id)
        else:
            candidates.setdefault(value, set()).add(ann.image_id)

    rng = np.random.default_rng(seed)
    selected: set[str] = set()
    for value in sorted(candidates, key=str):
        ids = sorted(candidates[value])
        if len(ids) <= n:
            if len(ids) < n:
                log.warning(
                    "subsample_equal(%s=%s): only %d images available, wanted %d",
                    attribute_key,
                    value,
                    len(ids),
                    n,
                )
            selected.update(ids)
        else:
            picked = rng.choice(len(ids), size=n, replace=False)
            selected.update(ids[k] for k in picked)

    images = {i: corpus.images[i] for i in sorted(selected)}
    annotations = [a for a in corpus.annotations if a.image_id in selected]
    step = (
        f"subsample_equal({attribute_key}, n={n}, seed={seed}): "
        f"kept {len(images)}/{len(corpus.images)} images"
    )
    log.info("%s", step)
    return Corpus(images=images, annotations=annotations, provenance=corpus.provenance + [step])


def filter_lighting(corpus: Corpus, allowed: set[Lighting]) -> Corpus:
    """Keep annotations whose lighting label is in ``allowed``.

    Images whose annotations are all filtered away are dropped; images that
    never had annotations are left alone.
    """
    if not allowed:
        raise ValueError("allowed lighting set must be non-empty")
    allowed = {Lighting(v) for v in allowed}
    annotations = [a for a in corpus.annotations if a.attributes.lighting in allowed]
    had_annotations = {a.image_id for a in corpus.annotations}
    still_annotated = {a.image_id for a in annotations}
    dropped = had_annotations - still_annotated
    images = {i: img for i, img in corpus.images.items() if i not in dropped}
    step = (
        f"filter_lighting({sorted(v.value for v in allowed)}): kept "
        f"{len(annotations)}/{len(corpus.annotations)} annotations, dropped {len(dropped)} images"
    )
    log.info("%s", step)
    return Corpus(images=images, annotations=annotations, provenance=corpus.provenance + [step])
