"""Count-based and confidence-based detection metrics.

Recall and precision are plain ratios on aggregated counts (micro-averaged
over images, no PR-curve interpolation). The confidence side aggregates raw
detector scores: mean true-positive confidence and mean false-positive
confidence. A metric whose denominator is empty is undefined and reported
as None, never silently coerced to zero.
"""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .matching import MatchResult

log = logging.getLogger(__name__)

#: IoU thresholds 0.50 .. 0.95 in steps of 0.05; mAR/mAP average over these.
MAR_LADDER: tuple[float, ...] = tuple(round(0.50 + 0.05 * i, 2) for i in range(10))


def average_recall(n_tp: int, n_fn: int) -> float | None:
    """TP / (TP + FN); None when there are no ground truths."""
    if n_tp < 0 or n_fn < 0:
        raise ValueError("counts must be non-negative")
    total = n_tp + n_fn
    if total == 0:
        return None
    return n_tp / total


def average_precision(n_tp: int, n_fp: int) -> float | None:
    """TP / (TP + FP); None when there are no detections."""
    if n_tp < 0 or n_fp < 0:
        raise ValueError("counts must be non-negative")
    total = n_tp + n_fp
    if total == 0:
        return None
    return n_tp / total


def mean_over_thresholds(
    values: Mapping[float, float | None],
    ladder: Sequence[float] = MAR_LADDER,
) -> float | None:
    """Arithmetic mean of per-threshold values over the full ladder.

    The keys must be exactly the ladder (compared at 2 decimals). Undefined
    entries are excluded with a warning; if every entry is undefined the
    mean itself is undefined.
    """
    keys = sorted(round(t, 2) for t in values)
    if keys != sorted(round(t, 2) for t in ladder):
        raise ValueError(f"threshold keys {keys} do not match ladder {sorted(ladder)}")
    defined = [v for v in values.values() if v is not None]
    if not defined:
        log.warning("all %d threshold values undefined; mean undefined", len(values))
        return None
    if len(defined) < len(values):
        log.warning(
            "excluding %d undefined threshold values from mean", len(values) - len(defined)
        )
    return sum(defined) / len(defined)


def _mean_confidence(confidences: Iterable[float]) -> float | None:
    conf = list(confidences)
    for c in conf:
        if not 0.0 <= c <= 1.0:
            raise ValueError(f"confidence {c} outside [0, 1]")
    if not conf:
        return None
    return sum(conf) / len(conf)


def atpc(tp_confidences: Iterable[float]) -> float | None:
    """Mean confidence over true positives; None when there are none."""
    return _mean_confidence(tp_confidences)


def afpc(fp_confidences: Iterable[float]) -> float | None:
    """Mean confidence over false positives; None when there are none.

    Lower is better: confident hallucinations are the failure mode this
    measures.
    """
    return _mean_confidence(fp_confidences)


@dataclass(frozen=True)
class Counts:
    n_tp: int
    n_fp: int
    n_fn: int


@dataclass(frozen=True)
class MetricBundle:
    """Per-threshold recall/precision plus pooled confidence metrics.

    ``m_ar``/``m_ap`` are means over :data:`MAR_LADDER` and are None when the
    bundle was not computed over exactly that ladder. ``atpc``/``afpc`` pool
    confidences at the reporting threshold.
    """

    ar_at: dict[float, float | None] = field(default_factory=dict)
    ap_at: dict[float, float | None] = field(default_factory=dict)
    m_ar: float | None = None
    m_ap: float | None = None
    atpc: float | None = None
    afpc: float | None = None
    counts: dict[float, Counts] = field(default_factory=dict)

    def value(self, metric_name: str) -> float | None:
        """Look up a metric by name: m_ar, m_ap, atpc, afpc, ar@T or ap@T."""
        plain = {"m_ar": self.m_ar, "m_ap": self.m_ap, "atpc": self.atpc, "afpc": self.afpc}
        if metric_name in plain:
            return plain[metric_name]
        for prefix, table in (("ar@", self.ar_at), ("ap@", self.ap_at)):
            if metric_name.startswith(prefix):
                try:
                    wanted = float(metric_name[len(prefix):])
                except ValueError as exc:
                    raise ValueError(f"bad metric name {metric_name!r}") from exc
                for t, v in table.items():
                    if abs(t - wanted) < 1e-9:
                        return v
                raise ValueError(f"threshold {wanted} not evaluated for {metric_name!r}")
        raise ValueError(f"unknown metric name {metric_name!r}")


def bundle(
    match_results: Sequence[MatchResult],
    reporting_threshold: float = 0.5,
) -> MetricBundle:
    """Aggregate match results across images into one metric bundle.

    Counts are summed per threshold across images and the ratios taken on
    the totals (micro-averaging). TP/FP confidences are pooled over all
    images at ``reporting_threshold``. Every image must have been matched at
    the same thresholds.
    """
    if not match_results:
        return MetricBundle()

    per_image: dict[str, list[float]] = defaultdict(list)
    for mr in match_results:
        per_image[mr.image_id].append(mr.iou_threshold)
    reference = sorted(next(iter(per_image.values())))
    for image_id, ts in per_image.items():
        if sorted(ts) != reference:
            raise ValueError(
                f"inconsistent thresholds across images: {image_id!r} has {sorted(ts)}, "
                f"expected {reference}"
            )
        if len(set(ts)) != len(ts):
            raise ValueError(f"duplicate match results for image {image_id!r}")

    totals: dict[float, list[int]] = {t: [0, 0, 0] for t in reference}
    tp_conf: list[float] = []
    fp_conf: list[float] = []
    for mr in match_results:
        agg = totals[mr.iou_threshold]
        agg[0] += mr.n_tp
        agg[1] += mr.n_fp
        agg[2] += mr.n_fn
        if abs(mr.iou_threshold - reporting_threshold) < 1e-9:
            tp_conf.extend(mr.tp_confidences())
            fp_conf.extend(mr.fp_confidences())

    counts = {t: Counts(*totals[t]) for t in reference}
    ar_at = {t: average_recall(c.n_tp, c.n_fn) for t, c in counts.items()}
    ap_at = {t: average_precision(c.n_tp, c.n_fp) for t, c in counts.items()}

    on_ladder = sorted(round(t, 2) for t in reference) == sorted(MAR_LADDER)
    m_ar = mean_over_thresholds(ar_at) if on_ladder else None
    m_ap = mean_over_thresholds(ap_at) if on_ladder else None
    if not on_ladder:
        log.debug("thresholds %s are not the standard ladder; m_ar/m_ap undefined", reference)
    if not any(abs(t - reporting_threshold) < 1e-9 for t in reference):
        log.debug(
            "reporting threshold %.2f not among matched thresholds; atpc/afpc undefined",
            reporting_threshold,
        )

    return MetricBundle(
        ar_at=ar_at,
        ap_at=ap_at,
        m_ar=m_ar,
        m_ap=m_ap,
        atpc=atpc(tp_conf),
        afpc=afpc(fp_conf),
        counts=counts,
    )
