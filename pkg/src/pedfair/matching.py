"""Greedy IoU assignment of predicted boxes to ground truths.

Matching runs per image and per IoU threshold. Detections are processed in
descending confidence order; each one takes the unmatched ground truth with
the highest IoU, provided that IoU clears the threshold. There is no true
negative notion here: an unmatched detection is a false positive and an
unmatched ground truth a false negative. All functions are pure, so
per-image matching can run in parallel and merge deterministically.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .model import BoundingBox, Detection, GroundTruthAnnotation

PERSON_CATEGORY = "person"


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two boxes; symmetric, in [0, 1]."""
    ix = min(a.x2, b.x2) - max(a.x, b.x)
    iy = min(a.y2, b.y2) - max(a.y, b.y)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    union = a.area() + b.area() - inter
    return inter / union


@dataclass(frozen=True)
class MatchResult:
    """TP/FP/FN assignment for one image at one IoU threshold.

    ``tp`` holds (detection index, ground-truth index, confidence) triples,
    ``fp`` holds (detection index, confidence) pairs and ``fn`` holds
    ground-truth indices. Indices refer to positions in the lists passed to
    :func:`match_image`; detections dropped before matching (wrong category
    or below the confidence cutoff) appear nowhere.
    """

    image_id: str
    iou_threshold: float
    tp: tuple[tuple[int, int, float], ...]
    fp: tuple[tuple[int, float], ...]
    fn: tuple[int, ...]

    @property
    def n_tp(self) -> int:
        return len(self.tp)

    @property
    def n_fp(self) -> int:
        return len(self.fp)

    @property
    def n_fn(self) -> int:
        return len(self.fn)

    def tp_confidences(self) -> list[float]:
        return [c for _, _, c in self.tp]

    def fp_confidences(self) -> list[float]:
        return [c for _, c in self.fp]


def _single_image_id(
    detections: Sequence[Detection], truths: Sequence[GroundTruthAnnotation]
) -> str:
    ids = {d.image_id for d in detections} | {t.image_id for t in truths}
    if len(ids) > 1:
        raise ValueError(f"records span multiple images: {sorted(ids)}")
    return next(iter(ids)) if ids else ""


def match_image(
    detections: Sequence[Detection],
    truths: Sequence[GroundTruthAnnotation],
    threshold: float,
    min_confidence: float = 0.0,
) -> MatchResult:
    """Greedily assign detections to ground truths at one IoU threshold.

    Non-person detections are dropped before matching, as are detections
    below ``min_confidence`` (default 0, i.e. no cutoff). Ties on confidence
    go to the lower detection index; ties on IoU to the lower ground-truth
    index, which makes the result deterministic.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"IoU threshold must lie in (0, 1), got {threshold}")
    image_id = _single_image_id(detections, truths)

    considered = [
        i
        for i, d in enumerate(detections)
        if d.category == PERSON_CATEGORY and d.confidence >= min_confidence
    ]
    considered.sort(key=lambda i: (-detections[i].confidence, i))

    matched: set[int] = set()
    tp: list[tuple[int, int, float]] = []
    fp: list[tuple[int, float]] = []
    for i in considered:
        det = detections[i]
        best_iou = 0.0
        best_j = -1
        for j, truth in enumerate(truths):
            if j in matched:
                continue
            overlap = iou(det.box, truth.box)
            if overlap > best_iou:
                best_iou = overlap
                best_j = j
        if best_j >= 0 and best_iou >= threshold:
            matched.add(best_j)
            tp.append((i, best_j, det.confidence))
        else:
            fp.append((i, det.confidence))

    fn = tuple(j for j in range(len(truths)) if j not in matched)
    return MatchResult(
        image_id=image_id,
        iou_threshold=threshold,
        tp=tuple(sorted(tp)),
        fp=tuple(sorted(fp)),
        fn=fn,
    )


def match_at_thresholds(
    detections: Sequence[Detection],
    truths: Sequence[GroundTruthAnnotation],
    thresholds: Sequence[float],
    min_confidence: float = 0.0,
) -> list[MatchResult]:
    """Match independently at each threshold of a strictly increasing ladder."""
    if len(thresholds) == 0:
        raise ValueError("threshold ladder must be non-empty")
    for t in thresholds:
        if not 0.0 < t < 1.0:
            raise ValueError(f"IoU threshold must lie in (0, 1), got {t}")
    if any(b <= a for a, b in zip(thresholds, thresholds[1:])):
        raise ValueError(f"thresholds must be strictly increasing, got {list(thresholds)}")
    return [match_image(detections, truths, t, min_confidence) for t in thresholds]
