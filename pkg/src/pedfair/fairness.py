"""Group-wise evaluation, parity checks, and inter-group disparity.

A group is defined by a :class:`~pedfair.model.GroupSpec`. Evaluating one
restricts the corpus to images whose weather satisfies the spec and that
contain at least one annotation satisfying its attribute predicates, then
attributes matching outcomes to the group:

* true positives and false negatives of the group's own annotations count
  toward the group;
* every unmatched detection in those images counts as a group false
  positive.

False-positive attribution is only meaningful when each image belongs to a
single group, which is what :func:`pedfair.corpus.curate_single_attribute`
guarantees; recall-side metrics are attributable per annotation either way.

Disparity between groups is summarized three ways: the largest pairwise
metric gap, the smallest pairwise gap, and the maximum Wasserstein-2
distance between the groups' per-member metric distributions (members are
the distinct attribute signatures inside a group, one metric sample each).
"""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .corpus import Corpus, DistanceBin, distance_bin
from .matching import MatchResult, match_at_thresholds
from .metrics import MAR_LADDER, MetricBundle, average_recall, bundle, mean_over_thresholds
from .model import Detection, GroupSpec, PersonAttributes

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GroupReport:
    """Metrics for one group plus its per-member metric samples."""

    spec: GroupSpec
    bundle: MetricBundle
    sample_count: int
    member_values: tuple[float, ...] | None = None

    @property
    def name(self) -> str:
        return self.spec.name


@dataclass(frozen=True)
class ParityResult:
    """Outcome of the pairwise equality check for one metric."""

    metric_name: str
    epsilon: float
    satisfied: bool | None
    residuals: dict[tuple[str, str], float]


@dataclass(frozen=True)
class DisparityReport:
    metric_name: str
    worst: float | None
    best: float | None
    wasserstein: float | None
    pairwise: dict[tuple[str, str], float]
    parity_satisfied: bool | None
    epsilon: float | None


def _attr_sort_key(attrs: PersonAttributes):
    return (
        sorted(attrs.skin_tones),
        attrs.gender.value,
        attrs.body_size.value,
        attrs.lighting.value,
    )


class GroupEvaluator:
    """Matches a corpus once, then answers group queries against the result.

    Matching every image at every threshold dominates the cost of an audit;
    this class does it a single time so that group, weather-slice, and
    distance-bin breakdowns reuse the same per-image match results.
    """

    def __init__(
        self,
        corpus: Corpus,
        detections: Sequence[Detection],
        thresholds: Sequence[float] = MAR_LADDER,
        reporting_threshold: float = 0.5,
        min_confidence: float = 0.0,
    ) -> None:
        self.corpus = corpus
        self.thresholds = tuple(thresholds)
        self.reporting_threshold = reporting_threshold
        self._anns = corpus.annotations_by_image()

        dets_by_image: dict[str, list[Detection]] = defaultdict(list)
        strays = 0
        for det in detections:
            if det.image_id not in corpus.images:
                strays += 1
                continue
            dets_by_image[det.image_id].append(det)
        if strays:
            log.warning("%d detections reference images outside the corpus; ignored", strays)

        self._matches: dict[str, list[MatchResult]] = {}
        for image_id in corpus.images:
            anns = self._anns[image_id]
            dets = dets_by_image.get(image_id, [])
            if not anns and not dets:
                self._matches[image_id] = []
                continue
            self._matches[image_id] = match_at_thresholds(
                dets, anns, self.thresholds, min_confidence=min_confidence
            )

    def evaluate(
        self,
        specs: Sequence[GroupSpec],
        image_ids: Iterable[str] | None = None,
        bin_filter: DistanceBin | None = None,
    ) -> list[GroupReport]:
        """One report per spec over the given image subset (default: all).

        ``bin_filter`` additionally restricts group membership to annotations
        whose box falls in that distance bin.
        """
        if not specs:
            raise ValueError("at least one group spec required")
        if image_ids is None:
            universe = sorted(self.corpus.images)
        else:
            universe = sorted(set(image_ids) & set(self.corpus.images))

        on_ladder = sorted(round(t, 2) for t in self.thresholds) == sorted(MAR_LADDER)
        reports = []
        for spec in specs:
            filtered: list[MatchResult] = []
            sample_count = 0
            member_anns: dict[PersonAttributes, int] = defaultdict(int)
            member_tp: dict[PersonAttributes, dict[float, int]] = defaultdict(
                lambda: defaultdict(int)
            )
            for image_id in universe:
                image = self.corpus.images[image_id]
                if not spec.matches_weather(image.weather):
                    continue
                anns = self._anns[image_id]
                members = {
                    k
                    for k, ann in enumerate(anns)
                    if spec.matches_attributes(ann.attributes)
                    and (bin_filter is None or distance_bin(ann.box) == bin_filter)
                }
                if not members:
                    continue
                sample_count += len(members)
                for k in members:
                    member_anns[anns[k].attributes] += 1
                for mr in self._matches[image_id]:
                    tp = tuple(hit for hit in mr.tp if hit[1] in members)
                    fn = tuple(g for g in mr.fn if g in members)
                    filtered.append(
                        MatchResult(mr.image_id, mr.iou_threshold, tp=tp, fp=mr.fp, fn=fn)
                    )
                    for _, g, _ in tp:
                        member_tp[anns[g].attributes][mr.iou_threshold] += 1

            if sample_count == 0:
                log.warning("group %r matched no annotations", spec.name)
            group_bundle = bundle(filtered, reporting_threshold=self.reporting_threshold)

            member_values: tuple[float, ...] | None = None
            if member_anns and on_ladder:
                values = []
                for attrs in sorted(member_anns, key=_attr_sort_key):
                    total = member_anns[attrs]
                    ar_at = {
                        t: average_recall(member_tp[attrs].get(t, 0), total - member_tp[attrs].get(t, 0))
                        for t in self.thresholds
                    }
                    m_ar = mean_over_thresholds(ar_at)
                    if m_ar is not None:
                        values.append(m_ar)
                if values:
                    member_values = tuple(values)

            reports.append(
                GroupReport(
                    spec=spec,
                    bundle=group_bundle,
                    sample_count=sample_count,
                    member_values=member_values,
                )
            )
        return reports


def evaluate_groups(
    corpus: Corpus,
    detections: Sequence[Detection],
    specs: Sequence[GroupSpec],
    thresholds: Sequence[float] = MAR_LADDER,
    reporting_threshold: float = 0.5,
    min_confidence: float = 0.0,
) -> list[GroupReport]:
    """Evaluate every spec against the corpus; see :class:`GroupEvaluator`."""
    evaluator = GroupEvaluator(
        corpus,
        detections,
        thresholds=thresholds,
        reporting_threshold=reporting_threshold,
        min_confidence=min_confidence,
    )
    return evaluator.evaluate(specs)


def _defined_values(reports: Sequence[GroupReport], metric_name: str) -> dict[str, float]:
    values: dict[str, float] = {}
    for report in reports:
        v = report.bundle.value(metric_name)
        if v is None:
            log.warning(
                "group %r has undefined %s; excluded from disparity", report.name, metric_name
            )
            continue
        values[report.name] = v
    return values


def pairwise_gaps(values: Mapping[str, float]) -> dict[tuple[str, str], float]:
    """Absolute metric gap for every unordered pair of groups."""
    names = sorted(values)
    return {
        (a, b): abs(values[a] - values[b])
        for i, a in enumerate(names)
        for b in names[i + 1 :]
    }


def disparity_worst(values: Mapping[str, float]) -> float | None:
    """Largest pairwise absolute gap; None with fewer than two values."""
    gaps = pairwise_gaps(values)
    if not gaps:
        log.warning("disparity_worst needs at least two defined values")
        return None
    return max(gaps.values())


def disparity_best(values: Mapping[str, float]) -> float | None:
    """Smallest pairwise absolute gap over distinct pairs; None with fewer than two values."""
    gaps = pairwise_gaps(values)
    if not gaps:
        log.warning("disparity_best needs at least two defined values")
        return None
    return min(gaps.values())


def parity_check(
    reports: Sequence[GroupReport], metric_name: str, epsilon: float
) -> ParityResult:
    """Check whether all pairwise gaps of the named metric are within epsilon."""
    if epsilon < 0:
        raise ValueError(f"epsilon must be non-negative, got {epsilon}")
    values = _defined_values(reports, metric_name)
    residuals = pairwise_gaps(values)
    if len(values) < 2:
        log.warning("parity check on %s needs >= 2 defined values", metric_name)
        return ParityResult(metric_name, epsilon, satisfied=None, residuals=residuals)
    satisfied = max(residuals.values()) <= epsilon
    return ParityResult(metric_name, epsilon, satisfied=satisfied, residuals=residuals)


def wasserstein2(a: Sequence[float], b: Sequence[float]) -> float:
    """Wasserstein-2 distance between two 1-D empirical distributions.

    Uses the quantile-function form: both sorted samples are stepped through
    on the common refinement of their cumulative-weight breakpoints, which
    for equal sizes reduces to the root mean squared difference of the
    sorted vectors (the optimal coupling in 1-D). Cost is O(n*m).
    """
    xa = np.sort(np.asarray(a, dtype=float))
    xb = np.sort(np.asarray(b, dtype=float))
    n, m = xa.size, xb.size
    if n == 0 or m == 0:
        raise ValueError("samples must be non-empty")
    if n == m:
        return float(np.sqrt(np.mean((xa - xb) ** 2)))
    # Each unit k of the n*m grid lies inside one quantile segment of both
    # distributions, so indexing by k//m and k//n integrates exactly.
    k = np.arange(n * m)
    return float(np.sqrt(np.mean((xa[k // m] - xb[k // n]) ** 2)))


def wasserstein2_max(samples: Mapping[str, Sequence[float]]) -> float | None:
    """Maximum pairwise Wasserstein-2 distance across groups.

    Every group must supply at least one sample. None when fewer than two
    groups are given.
    """
    for name, sample in samples.items():
        if len(sample) == 0:
            raise ValueError(f"group {name!r} has an empty sample list")
    names = sorted(samples)
    if len(names) < 2:
        log.warning("wasserstein2_max needs >= 2 groups")
        return None
    return max(
        wasserstein2(samples[a], samples[b])
        for i, a in enumerate(names)
        for b in names[i + 1 :]
    )


def disparity_report(
    reports: Sequence[GroupReport],
    metric_name: str,
    epsilon: float | None = None,
) -> DisparityReport:
    """Summarize inter-group disparity for one metric.

    The Wasserstein term compares the groups' member-sample distributions
    (mean recall over the threshold ladder per member); groups without
    member samples are excluded from it with a warning.
    """
    values = _defined_values(reports, metric_name)
    gaps = pairwise_gaps(values)
    worst = max(gaps.values()) if gaps else None
    best = min(gaps.values()) if gaps else None

    samples = {r.name: r.member_values for r in reports if r.member_values}
    skipped = [r.name for r in reports if not r.member_values]
    if skipped:
        log.warning("groups without member samples excluded from W2: %s", skipped)
    wasserstein = wasserstein2_max(samples) if len(samples) >= 2 else None

    if epsilon is None:
        parity = None
    else:
        parity = parity_check(reports, metric_name, epsilon).satisfied
    return DisparityReport(
        metric_name=metric_name,
        worst=worst,
        best=best,
        wasserstein=wasserstein,
        pairwise=gaps,
        parity_satisfied=parity,
        epsilon=epsilon,
    )
