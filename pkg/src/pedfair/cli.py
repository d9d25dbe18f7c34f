"""Command-line audit pipeline.

Subcommands: ``evaluate`` (per-group metrics, disparity-by-weather table,
distance-bin breakdown), ``curate`` (corpus filters), ``darken`` (ambient
darkness sweep over image files), ``synth`` (seeded synthetic corpus), and
``report-diff`` (compare two emitted reports).

Outputs are byte-stable for fixed inputs: reports carry no timestamps and
all iteration orders are pinned. Machine-readable values stay in [0, 1];
the human table scales by 100. Diagnostics go to stderr and never alter the
emitted files. Exit codes: 0 success, 3 load failure, 4 config/validation
failure (argparse itself exits 2 on usage errors).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

from .corpus import (
    Corpus,
    DistanceBin,
    LoadError,
    curate_single_attribute,
    filter_lighting,
    load,
    save_corpus,
    save_detections,
    subsample_equal,
)
from .darkness import (
    DEFAULT_FACTOR_LADDER,
    apply_darkness,
    darkened_name,
    read_pixels,
    write_pixels,
)
from .fairness import DisparityReport, GroupEvaluator, GroupReport, disparity_report
from .metrics import MAR_LADDER
from .model import GroupSpec, Lighting, WeatherKind
from .synthgen import degradation_from_dict, generate, scenario_from_dict

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_LOAD = 3
EXIT_CONFIG = 4


class ConfigError(Exception):
    """The run configuration is missing or inconsistent."""


_CONFIG_KEYS = {
    "ground_truth",
    "detections",
    "images_dir",
    "output_dir",
    "iou_thresholds",
    "reporting_threshold",
    "min_confidence",
    "epsilon",
    "seed",
    "disparity_metric",
    "groups",
    "families",
    "curation",
    "weather_levels",
    "darkness_factors",
    "synth",
}


@dataclass
class RunConfig:
    """Everything a run needs; a run is reproducible from this plus inputs."""

    ground_truth: str | None = None
    detections: str | None = None
    images_dir: str | None = None
    output_dir: str = "out"
    iou_thresholds: tuple[float, ...] = MAR_LADDER
    reporting_threshold: float = 0.5
    min_confidence: float = 0.0
    epsilon: float | None = None
    seed: int = 0
    disparity_metric: str = "m_ar"
    groups: tuple[GroupSpec, ...] = ()
    families: dict[str, tuple[str, ...]] = field(default_factory=dict)
    curation: tuple[dict, ...] = ()
    weather_levels: str | tuple[tuple[WeatherKind, float], ...] = "auto"
    darkness_factors: tuple[float, ...] = DEFAULT_FACTOR_LADDER
    synth: dict | None = field(default=None)

    def resolved_families(self) -> dict[str, tuple[str, ...]]:
        """Attribute families for the disparity blocks; all groups when unset."""
        if not self.families:
            return {"all": tuple(g.name for g in self.groups)}
        names = {g.name for g in self.groups}
        for family, members in self.families.items():
            missing = set(members) - names
            if missing:
                raise ConfigError(
                    f"family {family!r} references undefined groups {sorted(missing)}"
                )
        return dict(self.families)

    @classmethod
    def from_sources(cls, args: argparse.Namespace) -> "RunConfig":
        cfg = cls()
        config_path = getattr(args, "config", None)
        if config_path:
            cfg = cls._from_file(config_path)
        for attr, key in (
            ("gt", "ground_truth"),
            ("det", "detections"),
            ("images", "images_dir"),
            ("out", "output_dir"),
            ("seed", "seed"),
            ("epsilon", "epsilon"),
        ):
            value = getattr(args, attr, None)
            if value is not None:
                setattr(cfg, key, value)
        ladder = getattr(args, "iou_ladder", None)
        if ladder is not None:
            cfg.iou_thresholds = _parse_ladder(ladder)
        factors = getattr(args, "factors", None)
        if factors is not None:
            cfg.darkness_factors = tuple(float(v) for v in factors.split(","))
        return cfg

    @classmethod
    def _from_file(cls, path: str) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}: {exc.msg}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        unknown = set(data) - _CONFIG_KEYS
        if unknown:
            raise ConfigError(f"{path}: unknown config keys {sorted(unknown)}")
        cfg = cls()
        try:
            for key in ("ground_truth", "detections", "images_dir", "output_dir",
                        "disparity_metric"):
                if data.get(key) is not None:
                    setattr(cfg, key, str(data[key]))
            if data.get("iou_thresholds") is not None:
                cfg.iou_thresholds = tuple(float(t) for t in data["iou_thresholds"])
            for key in ("reporting_threshold", "min_confidence"):
                if data.get(key) is not None:
                    setattr(cfg, key, float(data[key]))
            if data.get("epsilon") is not None:
                cfg.epsilon = float(data["epsilon"])
            if data.get("seed") is not None:
                cfg.seed = int(data["seed"])
            cfg.groups = tuple(GroupSpec.from_dict(g) for g in data.get("groups", []))
            cfg.families = {
                str(name): tuple(str(m) for m in members)
                for name, members in data.get("families", {}).items()
            }
            cfg.curation = tuple(data.get("curation", []))
            levels = data.get("weather_levels", "auto")
            if levels != "auto":
                cfg.weather_levels = tuple(
                    (WeatherKind(w["kind"]), float(w.get("intensity", 0.0))) for w in levels
                )
            if data.get("darkness_factors") is not None:
                cfg.darkness_factors = tuple(float(v) for v in data["darkness_factors"])
            cfg.synth = data.get("synth")
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        return cfg

    def to_dict(self) -> dict:
        levels = self.weather_levels
        return {
            "ground_truth": self.ground_truth,
            "detections": self.detections,
            "images_dir": self.images_dir,
            "output_dir": self.output_dir,
            "iou_thresholds": list(self.iou_thresholds),
            "reporting_threshold": self.reporting_threshold,
            "min_confidence": self.min_confidence,
            "epsilon": self.epsilon,
            "seed": self.seed,
            "disparity_metric": self.disparity_metric,
            "groups": [g.to_dict() for g in self.groups],
            "families": {k: list(v) for k, v in self.families.items()},
            "curation": list(self.curation),
            "weather_levels": levels
            if levels == "auto"
            else [{"kind": k.value, "intensity": v} for k, v in levels],
            "darkness_factors": list(self.darkness_factors),
            "synth": self.synth,
        }


def _parse_ladder(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError as exc:
        raise ConfigError(f"bad IoU ladder {text!r}") from exc


def apply_curation(corpus: Corpus, steps: tuple[dict, ...], default_seed: int) -> Corpus:
    for step in steps:
        op = step.get("op")
        try:
            if op == "filter_lighting":
                corpus = filter_lighting(corpus, {Lighting(v) for v in step["allowed"]})
            elif op == "curate_single_attribute":
                corpus = curate_single_attribute(corpus, step["attribute"])
            elif op == "subsample_equal":
                corpus = subsample_equal(
                    corpus,
                    step["attribute"],
                    int(step["n"]),
                    int(step.get("seed", default_seed)),
                )
            else:
                raise ConfigError(f"unknown curation op {op!r}")
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"curation step {step!r}: {exc}") from exc
    return corpus


def _weather_rows(cfg: RunConfig, corpus: Corpus) -> list[tuple[WeatherKind, float]]:
    if cfg.weather_levels != "auto":
        return list(cfg.weather_levels)
    seen = {(img.weather.kind, img.weather.intensity) for img in corpus.images.values()}
    return sorted(seen, key=lambda kv: (kv[0].value, kv[1]))


def _group_payload(report: GroupReport) -> dict:
    b = report.bundle
    return {
        "name": report.name,
        "sample_count": report.sample_count,
        "member_values": list(report.member_values) if report.member_values else None,
        "metrics": {
            "ar_at": {f"{t:.2f}": b.ar_at[t] for t in sorted(b.ar_at)},
            "ap_at": {f"{t:.2f}": b.ap_at[t] for t in sorted(b.ap_at)},
            "m_ar": b.m_ar,
            "m_ap": b.m_ap,
            "atpc": b.atpc,
            "afpc": b.afpc,
            "counts": {
                f"{t:.2f}": {"tp": c.n_tp, "fp": c.n_fp, "fn": c.n_fn}
                for t, c in sorted(b.counts.items())
            },
        },
    }


def _disparity_payload(disp: DisparityReport) -> dict:
    return {
        "metric": disp.metric_name,
        "worst": disp.worst,
        "best": disp.best,
        "wasserstein": disp.wasserstein,
        "pairwise": {f"{a}|{b}": v for (a, b), v in sorted(disp.pairwise.items())},
        "parity_satisfied": disp.parity_satisfied,
        "epsilon": disp.epsilon,
    }


def _weather_label(kind: WeatherKind, intensity: float) -> str:
    if kind == WeatherKind.NONE:
        return "clear"
    if kind == WeatherKind.AMBIENT_DARKNESS:
        return f"darkness {intensity:.2f}"
    return f"{kind.value} {intensity:.0%}"


def _fmt(value: float | None) -> str:
    return "-" if value is None else f"{100.0 * value:.2f}"


def _render_text(payload: dict) -> str:
    lines = ["Per-group metrics (values x100)", ""]
    rt = f"{payload['reporting_threshold']:.2f}"
    header = f"{'group':<24}{'n':>8}{'mAR':>9}{'mAP':>9}{'AR@' + rt:>10}{'AP@' + rt:>10}{'ATPC':>9}{'AFPC':>9}"
    lines.append(header)
    for g in payload["groups"]:
        m = g["metrics"]
        lines.append(
            f"{g['name']:<24}{g['sample_count']:>8}{_fmt(m['m_ar']):>9}{_fmt(m['m_ap']):>9}"
            f"{_fmt(m['ar_at'].get(rt)):>10}{_fmt(m['ap_at'].get(rt)):>10}"
            f"{_fmt(m['atpc']):>9}{_fmt(m['afpc']):>9}"
        )
    metric = payload["disparity_metric"]
    for family in sorted(payload["disparities"]):
        epsilon = payload["disparities"][family]["epsilon"]
        eps_label = "-" if epsilon is None else f"{epsilon:g}"
        lines += [
            "",
            f"Disparity by weather on {metric}, family: {family} (values x100)",
            "",
            f"{'weather':<18}{'worst':>9}{'best':>9}{'W':>9}   parity(eps={eps_label})",
        ]
        for row in payload["weather_rows"]:
            d = row["disparities"][family]
            parity = {True: "yes", False: "no", None: "-"}[d["parity_satisfied"]]
            label = _weather_label(WeatherKind(row["kind"]), row["intensity"])
            lines.append(
                f"{label:<18}{_fmt(d['worst']):>9}{_fmt(d['best']):>9}"
                f"{_fmt(d['wasserstein']):>9}   {parity}"
            )
    lines.append("")
    return "\n".join(lines)


_CSV_METRICS = ("m_ar", "m_ap", "atpc", "afpc")


def _metric_items(group: dict) -> list[tuple[str, float | None]]:
    m = group["metrics"]
    items: list[tuple[str, float | None]] = [(name, m[name]) for name in _CSV_METRICS]
    items += [(f"ar@{t}", v) for t, v in sorted(m["ar_at"].items())]
    items += [(f"ap@{t}", v) for t, v in sorted(m["ap_at"].items())]
    return items


def _csv_value(value: float | None) -> str:
    return "" if value is None else repr(value)


def _render_metrics_csv(payload: dict) -> str:
    rows = ["weather_kind,weather_intensity,group,metric,value"]
    for g in payload["groups"]:
        for metric, value in _metric_items(g):
            rows.append(f"all,,{g['name']},{metric},{_csv_value(value)}")
    for row in payload["weather_rows"]:
        for g in row["groups"]:
            for metric, value in _metric_items(g):
                rows.append(
                    f"{row['kind']},{row['intensity']},{g['name']},{metric},{_csv_value(value)}"
                )
    return "\n".join(rows) + "\n"


def _render_bins_csv(payload: dict) -> str:
    rows = ["weather_kind,weather_intensity,bin,group,metric,value"]
    for row in payload["weather_rows"]:
        for bin_name in (b.value for b in DistanceBin):
            for g in row["distance_bins"][bin_name]:
                for metric, value in _metric_items(g):
                    rows.append(
                        f"{row['kind']},{row['intensity']},{bin_name},{g['name']},"
                        f"{metric},{_csv_value(value)}"
                    )
    return "\n".join(rows) + "\n"


def cmd_evaluate(args: argparse.Namespace) -> int:
    cfg = RunConfig.from_sources(args)
    if cfg.ground_truth is None:
        raise ConfigError("ground truth path required (--gt or config)")
    if cfg.detections is None:
        raise ConfigError("detections path required (--det or config)")
    if not cfg.groups:
        raise ConfigError("no groups defined; add a 'groups' list to the config")
    families = cfg.resolved_families()

    corpus, detections = load(cfg.ground_truth, cfg.detections)
    corpus = apply_curation(corpus, cfg.curation, cfg.seed)

    evaluator = GroupEvaluator(
        corpus,
        detections,
        thresholds=cfg.iou_thresholds,
        reporting_threshold=cfg.reporting_threshold,
        min_confidence=cfg.min_confidence,
    )

    def family_disparities(reports: list[GroupReport]) -> dict[str, dict]:
        by_name = {r.name: r for r in reports}
        return {
            family: _disparity_payload(
                disparity_report(
                    [by_name[m] for m in members], cfg.disparity_metric, cfg.epsilon
                )
            )
            for family, members in families.items()
        }

    overall = evaluator.evaluate(cfg.groups)

    weather_rows = []
    for kind, intensity in _weather_rows(cfg, corpus):
        ids = {
            i
            for i, img in corpus.images.items()
            if img.weather.kind == kind and abs(img.weather.intensity - intensity) < 1e-9
        }
        reports = evaluator.evaluate(cfg.groups, image_ids=ids)
        bins = {
            b.value: [
                _group_payload(r)
                for r in evaluator.evaluate(cfg.groups, image_ids=ids, bin_filter=b)
            ]
            for b in DistanceBin
        }
        weather_rows.append(
            {
                "kind": kind.value,
                "intensity": intensity,
                "groups": [_group_payload(r) for r in reports],
                "disparities": family_disparities(reports),
                "distance_bins": bins,
            }
        )

    payload = {
        "config": cfg.to_dict(),
        "provenance": list(corpus.provenance),
        "iou_thresholds": list(cfg.iou_thresholds),
        "reporting_threshold": cfg.reporting_threshold,
        "disparity_metric": cfg.disparity_metric,
        "groups": [_group_payload(r) for r in overall],
        "disparities": family_disparities(overall),
        "weather_rows": weather_rows,
    }

    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    (out / "report.txt").write_text(_render_text(payload))
    (out / "metrics.csv").write_text(_render_metrics_csv(payload))
    (out / "distance_bins.csv").write_text(_render_bins_csv(payload))
    log.info("evaluation written to %s", out)
    return EXIT_OK


def cmd_curate(args: argparse.Namespace) -> int:
    cfg = RunConfig.from_sources(args)
    if cfg.ground_truth is None:
        raise ConfigError("ground truth path required (--gt or config)")
    if not cfg.curation:
        raise ConfigError("no curation steps defined in config")
    corpus, _ = load(cfg.ground_truth)
    before = len(corpus.images)
    corpus = apply_curation(corpus, cfg.curation, cfg.seed)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_corpus(corpus, out / "curated_gt.json")
    log.info(
        "curated corpus: %d -> %d images (%d excluded); written to %s",
        before,
        len(corpus.images),
        before - len(corpus.images),
        out / "curated_gt.json",
    )
    return EXIT_OK


def cmd_darken(args: argparse.Namespace) -> int:
    cfg = RunConfig.from_sources(args)
    if cfg.ground_truth is None:
        raise ConfigError("ground truth path required (--gt or config)")
    if cfg.images_dir is None:
        raise ConfigError("images directory required (--images or config)")
    corpus, _ = load(cfg.ground_truth)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    images_dir = Path(cfg.images_dir)
    for factor in cfg.darkness_factors:
        subdir = out / f"d{factor}"
        subdir.mkdir(exist_ok=True)
        new_images = {}
        for image_id in sorted(corpus.images):
            img = corpus.images[image_id]
            if img.file_name is None:
                raise ConfigError(f"image {image_id!r} has no file_name; cannot darken")
            src = images_dir / img.file_name
            if not src.exists():
                raise LoadError(f"image file not found: {src}")
            darkened = apply_darkness(replace(img, pixel_data=read_pixels(src)), factor)
            name = darkened_name(img.file_name, factor)
            write_pixels(subdir / name, darkened.pixel_data)
            new_images[image_id] = replace(darkened, pixel_data=None, file_name=name)
        sub = Corpus(
            images=new_images,
            annotations=list(corpus.annotations),
            provenance=corpus.provenance + [f"apply_darkness(factor={factor})"],
        )
        save_corpus(sub, out / f"gt_d{factor}.json")
    log.info("wrote %d darkened corpora to %s", len(cfg.darkness_factors), out)
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    cfg = RunConfig.from_sources(args)
    if cfg.synth is None:
        raise ConfigError("config requires a 'synth' section")
    try:
        scenario = scenario_from_dict(cfg.synth)
        degradation = degradation_from_dict(cfg.synth.get("degradation", {}))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"synth section: {exc}") from exc
    corpus, detections = generate(degradation, scenario, cfg.seed)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_corpus(corpus, out / "ground_truth.json")
    save_detections(detections, out / "detections.json")
    log.info(
        "generated %d images, %d annotations, %d detections in %s",
        len(corpus.images),
        len(corpus.annotations),
        len(detections),
        out,
    )
    return EXIT_OK


def _diff_values(a, b, path: str, tolerance: float, diffs: list[str]) -> None:
    if isinstance(a, dict) and isinstance(b, dict):
        for key in sorted(set(a) | set(b)):
            if key not in a or key not in b:
                diffs.append(f"{path}/{key}: only in {'second' if key not in a else 'first'}")
            else:
                _diff_values(a[key], b[key], f"{path}/{key}", tolerance, diffs)
    elif isinstance(a, list) and isinstance(b, list):
        if len(a) != len(b):
            diffs.append(f"{path}: length {len(a)} != {len(b)}")
            return
        for idx, (va, vb) in enumerate(zip(a, b)):
            _diff_values(va, vb, f"{path}[{idx}]", tolerance, diffs)
    elif isinstance(a, (int, float)) and isinstance(b, (int, float)) and not isinstance(
        a, bool
    ) and not isinstance(b, bool):
        if abs(float(a) - float(b)) > tolerance:
            diffs.append(f"{path}: {a} != {b}")
    elif a != b:
        diffs.append(f"{path}: {a!r} != {b!r}")


def cmd_report_diff(args: argparse.Namespace) -> int:
    try:
        a = json.loads(Path(args.report_a).read_text())
        b = json.loads(Path(args.report_b).read_text())
    except OSError as exc:
        raise LoadError(str(exc)) from exc
    except json.JSONDecodeError as exc:
        raise LoadError(f"bad report JSON: {exc}") from exc
    if not args.include_config:
        # the config echo is run metadata (paths, output dir), not results
        for report in (a, b):
            if isinstance(report, dict):
                report.pop("config", None)
    diffs: list[str] = []
    _diff_values(a, b, "", args.tolerance, diffs)
    for line in diffs[:50]:
        print(line)
    if len(diffs) > 50:
        print(f"... and {len(diffs) - 50} more differences")
    if diffs:
        return 1
    print("reports are identical" + ("" if args.tolerance == 0 else f" at tolerance {args.tolerance}"))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pedfair",
        description="Fairness audit for pedestrian object detection results.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="seed for any randomized step")

    p_eval = sub.add_parser("evaluate", help="compute per-group metrics and disparities")
    common(p_eval)
    p_eval.add_argument("--gt", help="ground-truth JSON file")
    p_eval.add_argument("--det", help="detections JSON file")
    p_eval.add_argument("--iou-ladder", help="comma-separated IoU thresholds")
    p_eval.add_argument("--epsilon", type=float, help="parity tolerance")
    p_eval.set_defaults(func=cmd_evaluate)

    p_curate = sub.add_parser("curate", help="apply corpus curation steps")
    common(p_curate)
    p_curate.add_argument("--gt", help="ground-truth JSON file")
    p_curate.set_defaults(func=cmd_curate)

    p_darken = sub.add_parser("darken", help="write darkness-factor sweeps of the images")
    common(p_darken)
    p_darken.add_argument("--gt", help="ground-truth JSON file")
    p_darken.add_argument("--images", help="directory holding the referenced image files")
    p_darken.add_argument("--factors", help="comma-separated darkness factors")
    p_darken.set_defaults(func=cmd_darken)

    p_synth = sub.add_parser("synth", help="generate a synthetic corpus and detections")
    common(p_synth)
    p_synth.set_defaults(func=cmd_synth)

    p_diff = sub.add_parser("report-diff", help="compare two report.json files")
    p_diff.add_argument("report_a")
    p_diff.add_argument("report_b")
    p_diff.add_argument("--tolerance", type=float, default=0.0)
    p_diff.add_argument(
        "--include-config", action="store_true",
        help="also compare the config echo (paths, seeds) instead of results only",
    )
    p_diff.set_defaults(func=cmd_report_diff)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr, level=logging.INFO, format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        return args.func(args)
    except LoadError as exc:
        log.error("load failure: %s", exc)
        return EXIT_LOAD
    except (ConfigError, ValueError) as exc:
        log.error("invalid configuration: %s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
