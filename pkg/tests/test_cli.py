"""CLI pipeline: reports, determinism, exit codes, derived corpora."""

import json

import numpy as np
import pytest

from pedfair.cli import EXIT_CONFIG, EXIT_LOAD, EXIT_OK, main
from pedfair.corpus import load, save_corpus, save_detections
from pedfair.darkness import write_pixels
from pedfair.fairness import disparity_worst, wasserstein2
from conftest import golden_fixture


@pytest.fixture
def golden_files(tmp_path):
    corpus, detections = golden_fixture()
    gt = tmp_path / "gt.json"
    dt = tmp_path / "det.json"
    save_corpus(corpus, gt)
    save_detections(detections, dt)
    config = {
        "groups": [
            {"name": "female", "gender": "female"},
            {"name": "male", "gender": "male"},
        ],
        "epsilon": 0.01,
    }
    cfg = tmp_path / "config.json"
    cfg.write_text(json.dumps(config))
    return gt, dt, cfg


def _evaluate(gt, dt, cfg, out):
    return main(
        ["evaluate", "--gt", str(gt), "--det", str(dt), "--config", str(cfg), "--out", str(out)]
    )


class TestEvaluate:
    def test_golden_report_values(self, golden_files, tmp_path):
        gt, dt, cfg = golden_files
        out = tmp_path / "out"
        assert _evaluate(gt, dt, cfg, out) == EXIT_OK
        report = json.loads((out / "report.json").read_text())
        female, male = report["groups"]
        assert female["name"] == "female"
        assert female["metrics"]["m_ar"] == 1.0
        assert female["metrics"]["ap_at"]["0.50"] == pytest.approx(2 / 3)
        assert female["metrics"]["atpc"] == pytest.approx(0.8)
        assert male["metrics"]["m_ar"] == 0.75
        assert male["metrics"]["afpc"] == pytest.approx(0.4)
        assert report["disparities"]["all"]["worst"] == pytest.approx(0.25)
        assert report["disparities"]["all"]["parity_satisfied"] is False
        assert len(report["weather_rows"]) == 1
        assert (out / "report.txt").exists()
        assert (out / "metrics.csv").exists()
        assert (out / "distance_bins.csv").exists()

    def test_byte_stable_across_runs(self, golden_files, tmp_path):
        gt, dt, cfg = golden_files
        out = tmp_path / "out"
        _evaluate(gt, dt, cfg, out)
        first = {
            name: (out / name).read_bytes()
            for name in ("report.json", "report.txt", "metrics.csv", "distance_bins.csv")
        }
        _evaluate(gt, dt, cfg, out)
        second = {name: (out / name).read_bytes() for name in first}
        assert first == second

    def test_emitted_disparities_recomputable_from_group_values(self, golden_files, tmp_path):
        gt, dt, cfg = golden_files
        out = tmp_path / "out"
        _evaluate(gt, dt, cfg, out)
        report = json.loads((out / "report.json").read_text())
        for row in [report] + report["weather_rows"]:
            values = {
                g["name"]: g["metrics"]["m_ar"]
                for g in row["groups"]
                if g["metrics"]["m_ar"] is not None
            }
            if len(values) >= 2:
                assert disparity_worst(values) == row["disparities"]["all"]["worst"]
            samples = {
                g["name"]: g["member_values"] for g in row["groups"] if g["member_values"]
            }
            if len(samples) == 2:
                a, b = samples.values()
                assert wasserstein2(a, b) == row["disparities"]["all"]["wasserstein"]

    def test_distance_bins_present(self, golden_files, tmp_path):
        gt, dt, cfg = golden_files
        out = tmp_path / "out"
        _evaluate(gt, dt, cfg, out)
        report = json.loads((out / "report.json").read_text())
        bins = report["weather_rows"][0]["distance_bins"]
        assert set(bins) == {"farther", "midway", "closer"}
        by_name = {g["name"]: g for g in bins["closer"]}
        assert by_name["male"]["sample_count"] == 1
        assert by_name["male"]["metrics"]["atpc"] == pytest.approx(0.6)

    def test_metrics_csv_shape(self, golden_files, tmp_path):
        gt, dt, cfg = golden_files
        out = tmp_path / "out"
        _evaluate(gt, dt, cfg, out)
        lines = (out / "metrics.csv").read_text().strip().splitlines()
        assert lines[0] == "weather_kind,weather_intensity,group,metric,value"
        # 2 groups x (4 scalar + 10 ar + 10 ap) metrics, overall + 1 weather row
        assert len(lines) - 1 == 2 * 24 * 2

    def test_parity_true_on_equal_metric_fixture(self, golden_files, tmp_path):
        gt, dt, _ = golden_files
        # two specs that resolve to the same member set have equal metrics,
        # so any non-negative epsilon satisfies parity
        cfg = tmp_path / "eq.json"
        cfg.write_text(json.dumps({
            "groups": [
                {"name": "women", "gender": "female"},
                {"name": "lighter-tones", "skin_tones": [1, 2, 3]},
            ],
            "epsilon": 0.01,
        }))
        out = tmp_path / "out-eq"
        assert _evaluate(gt, dt, cfg, out) == EXIT_OK
        report = json.loads((out / "report.json").read_text())
        assert report["disparities"]["all"]["parity_satisfied"] is True
        assert report["disparities"]["all"]["worst"] == 0.0

    def test_attribute_families_get_separate_disparity_blocks(self, golden_files, tmp_path):
        gt, dt, _ = golden_files
        cfg = tmp_path / "fam.json"
        cfg.write_text(json.dumps({
            "groups": [
                {"name": "female", "gender": "female"},
                {"name": "male", "gender": "male"},
                {"name": "small", "body_size": "small"},
                {"name": "large", "body_size": "large"},
            ],
            "families": {"gender": ["female", "male"], "body_size": ["small", "large"]},
            "epsilon": 0.01,
        }))
        out = tmp_path / "out-fam"
        assert _evaluate(gt, dt, cfg, out) == EXIT_OK
        report = json.loads((out / "report.json").read_text())
        assert set(report["disparities"]) == {"gender", "body_size"}
        for row in report["weather_rows"]:
            assert set(row["disparities"]) == {"gender", "body_size"}
        text = (out / "report.txt").read_text()
        assert "family: gender" in text and "family: body_size" in text

    def test_family_referencing_unknown_group_is_config_failure(self, golden_files, tmp_path):
        gt, dt, _ = golden_files
        cfg = tmp_path / "badfam.json"
        cfg.write_text(json.dumps({
            "groups": [{"name": "female", "gender": "female"}],
            "families": {"gender": ["female", "ghost"]},
        }))
        code = main(["evaluate", "--gt", str(gt), "--det", str(dt), "--config", str(cfg),
                     "--out", str(tmp_path / "o")])
        assert code == EXIT_CONFIG

    def test_iou_ladder_flag(self, golden_files, tmp_path):
        gt, dt, cfg = golden_files
        out = tmp_path / "out"
        code = main(
            ["evaluate", "--gt", str(gt), "--det", str(dt), "--config", str(cfg),
             "--out", str(out), "--iou-ladder", "0.5,0.75"]
        )
        assert code == EXIT_OK
        report = json.loads((out / "report.json").read_text())
        assert report["iou_thresholds"] == [0.5, 0.75]
        assert report["groups"][0]["metrics"]["m_ar"] is None  # off-ladder


class TestExitCodes:
    def test_missing_input_file_is_load_failure(self, golden_files, tmp_path):
        _, dt, cfg = golden_files
        code = main(
            ["evaluate", "--gt", str(tmp_path / "absent.json"), "--det", str(dt),
             "--config", str(cfg), "--out", str(tmp_path / "o")]
        )
        assert code == EXIT_LOAD

    def test_no_groups_is_config_failure(self, golden_files, tmp_path):
        gt, dt, _ = golden_files
        code = main(
            ["evaluate", "--gt", str(gt), "--det", str(dt), "--out", str(tmp_path / "o")]
        )
        assert code == EXIT_CONFIG

    def test_unknown_config_key_is_config_failure(self, golden_files, tmp_path):
        gt, dt, _ = golden_files
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"grupos": []}))
        code = main(
            ["evaluate", "--gt", str(gt), "--det", str(dt), "--config", str(bad),
             "--out", str(tmp_path / "o")]
        )
        assert code == EXIT_CONFIG

    def test_bad_iou_ladder_is_config_failure(self, golden_files, tmp_path):
        gt, dt, cfg = golden_files
        code = main(
            ["evaluate", "--gt", str(gt), "--det", str(dt), "--config", str(cfg),
             "--out", str(tmp_path / "o"), "--iou-ladder", "0.5,abc"]
        )
        assert code == EXIT_CONFIG


class TestCurate:
    def test_single_attribute_curation(self, tmp_path):
        gt = tmp_path / "gt.json"
        payload = {
            "images": [
                {"id": "mixed", "width": 100, "height": 100},
                {"id": "pure", "width": 100, "height": 100},
            ],
            "annotations": [
                {"id": 0, "image_id": "mixed", "bbox": [0, 0, 10, 10],
                 "attributes": {"skin_tones": [2]}},
                {"id": 1, "image_id": "mixed", "bbox": [20, 20, 10, 10],
                 "attributes": {"skin_tones": [8]}},
                {"id": 2, "image_id": "pure", "bbox": [0, 0, 10, 10],
                 "attributes": {"skin_tones": [5]}},
            ],
        }
        gt.write_text(json.dumps(payload))
        cfg = tmp_path / "config.json"
        cfg.write_text(json.dumps(
            {"curation": [{"op": "curate_single_attribute", "attribute": "skin_tone"}]}
        ))
        out = tmp_path / "out"
        code = main(["curate", "--gt", str(gt), "--config", str(cfg), "--out", str(out)])
        assert code == EXIT_OK
        curated, _ = load(out / "curated_gt.json")
        assert set(curated.images) == {"pure"}
        assert any("curate_single_attribute" in step for step in curated.provenance)

    def test_subsample_step_uses_seed(self, tmp_path):
        corpus, _ = golden_fixture()
        gt = tmp_path / "gt.json"
        save_corpus(corpus, gt)
        cfg = tmp_path / "config.json"
        cfg.write_text(json.dumps(
            {"curation": [{"op": "subsample_equal", "attribute": "gender", "n": 1}]}
        ))
        outputs = []
        for name in ("o1", "o2"):
            out = tmp_path / name
            assert main(["curate", "--gt", str(gt), "--config", str(cfg),
                         "--out", str(out), "--seed", "42"]) == EXIT_OK
            outputs.append((out / "curated_gt.json").read_bytes())
        assert outputs[0] == outputs[1]


class TestDarken:
    def test_full_ladder_writes_eleven_corpora(self, tmp_path):
        rng = np.random.default_rng(3)
        images_dir = tmp_path / "imgs"
        images_dir.mkdir()
        payload = {"images": [], "annotations": []}
        for name in ("one", "two"):
            pixels = rng.integers(0, 256, size=(6, 8, 3), dtype=np.uint8)
            write_pixels(images_dir / f"{name}.png", pixels)
            payload["images"].append(
                {"id": name, "file_name": f"{name}.png", "width": 8, "height": 6}
            )
        gt = tmp_path / "gt.json"
        gt.write_text(json.dumps(payload))
        out = tmp_path / "dark"
        code = main(["darken", "--gt", str(gt), "--images", str(images_dir), "--out", str(out)])
        assert code == EXIT_OK
        gt_files = sorted(out.glob("gt_d*.json"))
        assert len(gt_files) == 11
        assert sorted(p.name for p in out.iterdir() if p.is_dir()) == sorted(
            f"d{round(0.1 * i, 1)}" for i in range(11)
        )
        darkened, _ = load(out / "gt_d0.4.json")
        assert darkened.images["one"].weather.kind.value == "ambient_darkness"
        assert darkened.images["one"].file_name == "one_d0.4.png"
        assert (out / "d0.4" / "one_d0.4.png").exists()

    def test_missing_image_file_is_load_failure(self, tmp_path):
        gt = tmp_path / "gt.json"
        gt.write_text(json.dumps({
            "images": [{"id": "x", "file_name": "x.png", "width": 4, "height": 4}],
            "annotations": [],
        }))
        (tmp_path / "imgs").mkdir()
        code = main(["darken", "--gt", str(gt), "--images", str(tmp_path / "imgs"),
                     "--out", str(tmp_path / "o"), "--factors", "0.5"])
        assert code == EXIT_LOAD


class TestSynth:
    def _config(self, tmp_path):
        cfg = tmp_path / "synth.json"
        cfg.write_text(json.dumps({
            "synth": {
                "n_images": 12,
                "pedestrians_per_image": 2,
                "types": [
                    {"label": "wf", "gender": "female", "skin_tones": [3]},
                    {"label": "wm", "gender": "male", "skin_tones": [7]},
                ],
                "weather": [
                    {"kind": "fog", "intensity": 0.0},
                    {"kind": "fog", "intensity": 0.5},
                ],
                "degradation": {
                    "base_confidence": 0.85,
                    "fog_decay": 0.4,
                    "miss_base": 0.1,
                    "hallucination_rate": 0.2,
                    "confidence_noise_sd": 0.01,
                },
            }
        }))
        return cfg

    def test_fixed_seed_writes_identical_files(self, tmp_path):
        cfg = self._config(tmp_path)
        outputs = []
        for name in ("s1", "s2"):
            out = tmp_path / name
            assert main(["synth", "--config", str(cfg), "--out", str(out),
                         "--seed", "7"]) == EXIT_OK
            outputs.append(
                (
                    (out / "ground_truth.json").read_bytes(),
                    (out / "detections.json").read_bytes(),
                )
            )
        assert outputs[0] == outputs[1]

    def test_generated_files_load_and_evaluate(self, tmp_path):
        cfg = self._config(tmp_path)
        out = tmp_path / "s"
        main(["synth", "--config", str(cfg), "--out", str(out), "--seed", "7"])
        eval_cfg = tmp_path / "eval.json"
        eval_cfg.write_text(json.dumps({
            "groups": [{"name": "female", "gender": "female"},
                       {"name": "male", "gender": "male"}],
        }))
        report_dir = tmp_path / "rep"
        code = main(["evaluate", "--gt", str(out / "ground_truth.json"),
                     "--det", str(out / "detections.json"),
                     "--config", str(eval_cfg), "--out", str(report_dir)])
        assert code == EXIT_OK
        report = json.loads((report_dir / "report.json").read_text())
        assert len(report["weather_rows"]) == 2  # one per fog level

    def test_missing_synth_section_is_config_failure(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text("{}")
        assert main(["synth", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_CONFIG


class TestReportDiff:
    def test_identical_reports(self, golden_files, tmp_path, capsys):
        gt, dt, cfg = golden_files
        out1, out2 = tmp_path / "a", tmp_path / "b"
        _evaluate(gt, dt, cfg, out1)
        _evaluate(gt, dt, cfg, out2)
        code = main(["report-diff", str(out1 / "report.json"), str(out2 / "report.json")])
        assert code == EXIT_OK
        assert "identical" in capsys.readouterr().out

    def test_perturbed_report_detected(self, golden_files, tmp_path, capsys):
        gt, dt, cfg = golden_files
        out = tmp_path / "a"
        _evaluate(gt, dt, cfg, out)
        report = json.loads((out / "report.json").read_text())
        report["groups"][0]["metrics"]["m_ar"] = 0.123
        altered = tmp_path / "altered.json"
        altered.write_text(json.dumps(report))
        code = main(["report-diff", str(out / "report.json"), str(altered)])
        assert code == 1
        assert "m_ar" in capsys.readouterr().out
