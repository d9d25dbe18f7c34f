"""Shared builders and independent reference implementations for the tests."""

from __future__ import annotations

import time

import numpy as np
import pytest

# captured when collection starts so the last-sorted test can bound the
# wall-clock cost of the whole suite
SESSION_START = time.perf_counter()

from pedfair.corpus import Corpus
from pedfair.matching import iou
from pedfair.model import (
    BodySize,
    BoundingBox,
    Detection,
    Gender,
    GroundTruthAnnotation,
    ImageRecord,
    Lighting,
    PersonAttributes,
    WeatherCondition,
)


def attrs(tones=(), gender="unknown", body_size="unknown", lighting="unknown"):
    return PersonAttributes(
        skin_tones=frozenset(tones),
        gender=Gender(gender),
        body_size=BodySize(body_size),
        lighting=Lighting(lighting),
    )


def ann(image_id, x, y, w, h, **attr_kwargs):
    return GroundTruthAnnotation(
        image_id=image_id, box=BoundingBox(x, y, w, h), attributes=attrs(**attr_kwargs)
    )


def det(image_id, x, y, w, h, confidence, category="person"):
    return Detection(
        image_id=image_id,
        box=BoundingBox(x, y, w, h),
        category=category,
        confidence=confidence,
    )


def image(image_id, width=200, height=200, weather=None, **kwargs):
    return ImageRecord(
        image_id=image_id,
        width=width,
        height=height,
        weather=weather or WeatherCondition(),
        **kwargs,
    )


def golden_fixture() -> tuple[Corpus, list[Detection]]:
    """Three images with hand-checkable matches at IoU 0.5.

    Every matched detection coincides exactly with its ground truth, so the
    counts are the same at every ladder threshold:

    * image a: truths a0, a1 (both female); detections at 0.9 (TP on a0),
      0.8 (FP, overlaps the already-taken a0), 0.7 (TP on a1)
    * image b: one truth (male, closer bin); detections at 0.6 (TP) and
      0.4 (FP, off in a corner)
    * image c: three truths (male, midway bin); detections at 1.0 and 0.5
      (TPs), third truth missed (FN)

    Totals at any threshold: TP=5, FP=2, FN=1, so AR=5/6, AP=5/7,
    ATPC=(0.9+0.7+0.6+1.0+0.5)/5=0.74, AFPC=(0.8+0.4)/2=0.6.
    """
    images = {
        "a": image("a"),
        "b": image("b"),
        "c": image("c"),
    }
    female = dict(gender="female", body_size="small", lighting="well_lit")
    annotations = [
        ann("a", 0, 0, 10, 10, tones={2}, **female),
        ann("a", 100, 100, 20, 20, tones={3}, **female),
        ann("b", 0, 0, 100, 100, tones={8}, gender="male", body_size="large", lighting="dimly_lit"),
        ann("c", 0, 0, 40, 40, tones={8}, gender="male", body_size="medium", lighting="well_lit"),
        ann("c", 50, 50, 40, 40, tones={8}, gender="male", body_size="medium", lighting="well_lit"),
        ann("c", 120, 120, 40, 40, tones={8}, gender="male", body_size="medium", lighting="well_lit"),
    ]
    detections = [
        det("a", 0, 0, 10, 10, 0.9),
        det("a", 5, 0, 10, 10, 0.8),
        det("a", 100, 100, 20, 20, 0.7),
        det("b", 0, 0, 100, 100, 0.6),
        det("b", 150, 150, 10, 10, 0.4),
        det("c", 0, 0, 40, 40, 1.0),
        det("c", 50, 50, 40, 40, 0.5),
    ]
    corpus = Corpus(images=images, annotations=annotations, provenance=["golden fixture"])
    return corpus, detections


def reference_match(detections, truths, threshold, min_confidence=0.0):
    """Straight-line reimplementation of the greedy rule, for cross-checking.

    Selection-sorts the surviving detections by (confidence desc, index asc)
    and scans the untaken truths for the best IoU, lower index winning ties.
    Returns (tp, fp, fn) as plain sets.
    """
    remaining = [
        i
        for i, d in enumerate(detections)
        if d.category == "person" and d.confidence >= min_confidence
    ]
    order = []
    while remaining:
        best = remaining[0]
        for i in remaining[1:]:
            if detections[i].confidence > detections[best].confidence:
                best = i
        order.append(best)
        remaining.remove(best)

    taken = set()
    tp, fp = set(), set()
    for i in order:
        best_iou = 0.0
        best_j = None
        for j in range(len(truths)):
            if j in taken:
                continue
            overlap = iou(detections[i].box, truths[j].box)
            if overlap > best_iou:
                best_iou = overlap
                best_j = j
        if best_j is not None and best_iou >= threshold:
            taken.add(best_j)
            tp.add((i, best_j, detections[i].confidence))
        else:
            fp.add((i, detections[i].confidence))
    fn = {j for j in range(len(truths)) if j not in taken}
    return tp, fp, fn


def random_match_instance(rng: np.random.Generator):
    """Random small matching instance with frequent overlaps and ties."""
    n_truths = int(rng.integers(0, 7))
    n_dets = int(rng.integers(0, 7))

    def rand_box():
        return BoundingBox(
            float(rng.integers(0, 40)),
            float(rng.integers(0, 40)),
            float(rng.integers(1, 21)),
            float(rng.integers(1, 21)),
        )

    truths = [
        GroundTruthAnnotation("img", rand_box(), PersonAttributes()) for _ in range(n_truths)
    ]
    detections = []
    for _ in range(n_dets):
        if truths and rng.random() < 0.5:
            # jitter an existing truth so near-threshold overlaps occur
            base = truths[int(rng.integers(0, len(truths)))].box
            box = BoundingBox(
                max(0.0, base.x + float(rng.integers(-4, 5))),
                max(0.0, base.y + float(rng.integers(-4, 5))),
                max(1.0, base.w + float(rng.integers(-3, 4))),
                max(1.0, base.h + float(rng.integers(-3, 4))),
            )
        else:
            box = rand_box()
        if rng.random() < 0.5:
            confidence = round(float(rng.integers(0, 11)) / 10.0, 1)  # force ties
        else:
            confidence = float(rng.random())
        detections.append(Detection("img", box, "person", confidence))
    threshold = float(rng.choice([0.3, 0.5, 0.75, 0.9]))
    return detections, truths, threshold


@pytest.fixture
def golden():
    return golden_fixture()
