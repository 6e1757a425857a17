import json

import pytest

from tmjcds.cli import EXIT_IO, EXIT_OK, EXIT_VALIDATION, main


@pytest.fixture(scope="module")
def cohort_csv(tmp_path_factory):
    out_dir = tmp_path_factory.mktemp("gen")
    cfg = out_dir / "config.json"
    cfg.write_text(json.dumps({"preset": "high-signal", "n_patients": 80}))
    rc = main(["generate", "--config", str(cfg), "--out-dir", str(out_dir),
               "--out", "cohort.csv", "--seed", "9"])
    assert rc == EXIT_OK
    return out_dir / "cohort.csv"


class TestGenerate:
    def test_writes_cohort_and_manifest(self, cohort_csv):
        assert cohort_csv.exists()
        manifest = json.loads((cohort_csv.parent / "generate_manifest.json").read_text())
        assert manifest["command"] == "generate"
        assert manifest["parameters"]["n_patients"] == 80
        assert manifest["outputs"] == [str(cohort_csv)]
        header = cohort_csv.read_text().splitlines()[0]
        assert header.startswith("patient_id,gender,exam_time_years,age_years,label,")

    def test_seed_changes_content(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"n_patients": 10}))
        for seed in (1, 2):
            rc = main(["generate", "--config", str(cfg), "--out-dir",
                       str(tmp_path / f"s{seed}"), "--seed", str(seed)])
            assert rc == EXIT_OK
        a = (tmp_path / "s1" / "cohort.csv").read_text()
        b = (tmp_path / "s2" / "cohort.csv").read_text()
        assert a != b
        assert a.splitlines()[0] == b.splitlines()[0]  # same schema header

    def test_bad_config_names_field(self, tmp_path, capsys):
        cfg = tmp_path / "bad.json"
        cfg.write_text(json.dumps({"preset": "metaphysical"}))
        rc = main(["generate", "--config", str(cfg), "--out-dir", str(tmp_path)])
        assert rc == EXIT_VALIDATION
        assert "preset" in capsys.readouterr().err


@pytest.fixture(scope="module")
def trained_dir(cohort_csv, tmp_path_factory):
    out_dir = tmp_path_factory.mktemp("train")
    rc = main([
        "train", "--cohort", str(cohort_csv), "--strategy", "iid",
        "--features", "expert", "--trees", "12", "--max-depth", "6",
        "--split-seed", "4", "--seed", "2", "--out-dir", str(out_dir),
        "--shap-max-rows", "8",
    ])
    assert rc == EXIT_OK
    return out_dir


class TestTrain:
    def test_outputs_present(self, trained_dir):
        for name in ("model.json", "report.json", "shap_summary.csv",
                      "shap_points.csv", "train_manifest.json"):
            assert (trained_dir / name).exists()

    def test_report_structure(self, trained_dir):
        report = json.loads((trained_dir / "report.json").read_text())
        assert report["strategy_tag"] == "iid"
        assert report["d"] == 26
        assert "macro_f1" in report["metrics"]

    def test_deterministic_across_runs(self, cohort_csv, tmp_path):
        outs = []
        for name in ("a", "b"):
            out_dir = tmp_path / name
            rc = main([
                "train", "--cohort", str(cohort_csv), "--strategy", "iid",
                "--trees", "8", "--max-depth", "5", "--split-seed", "4",
                "--seed", "2", "--out-dir", str(out_dir), "--shap-max-rows", "5",
            ])
            assert rc == EXIT_OK
            outs.append(out_dir)
        model_a = (outs[0] / "model.json").read_bytes()
        model_b = (outs[1] / "model.json").read_bytes()
        assert model_a == model_b
        assert (outs[0] / "report.json").read_bytes() == (outs[1] / "report.json").read_bytes()

    def test_temporal_and_lagged_flags(self, cohort_csv, tmp_path):
        rc = main([
            "train", "--cohort", str(cohort_csv), "--strategy", "temporal",
            "--segment", "0", "--trees", "8", "--max-depth", "5",
            "--out-dir", str(tmp_path / "t0"), "--shap-max-rows", "5",
        ])
        assert rc == EXIT_OK
        report = json.loads((tmp_path / "t0" / "report.json").read_text())
        assert report["strategy_tag"] == "temporal:0"
        rc = main([
            "train", "--cohort", str(cohort_csv), "--strategy", "lagged", "--k", "1",
            "--trees", "8", "--max-depth", "5", "--out-dir", str(tmp_path / "l1"),
            "--shap-max-rows", "5",
        ])
        assert rc == EXIT_OK
        report = json.loads((tmp_path / "l1" / "report.json").read_text())
        assert report["d"] == 52

    def test_missing_cohort_io_error(self, tmp_path):
        rc = main(["train", "--cohort", str(tmp_path / "nope.csv"),
                   "--out-dir", str(tmp_path)])
        assert rc == EXIT_IO


class TestEvaluate:
    def test_matches_training_report(self, cohort_csv, trained_dir, tmp_path):
        rc = main(["evaluate", "--model", str(trained_dir / "model.json"),
                   "--cohort", str(cohort_csv), "--out-dir", str(tmp_path),
                   "--shap-max-rows", "8"])
        assert rc == EXIT_OK
        evaluation = json.loads((tmp_path / "evaluation_report.json").read_text())
        training = json.loads((trained_dir / "report.json").read_text())
        assert evaluation["metrics"] == training["metrics"]
        assert evaluation["coverage"] == training["coverage"]


class TestExplain:
    def test_attribution_json(self, trained_dir, tmp_path):
        request = {
            "values": {"krepitationleft": 1, "krepitationright": 1, "openingmm": 36.0},
            "gender": "female",
            "age_years": 9.0,
        }
        row = tmp_path / "row.json"
        row.write_text(json.dumps(request))
        rc = main(["explain", "--model", str(trained_dir / "model.json"),
                   "--row-file", str(row), "--out-dir", str(tmp_path)])
        assert rc == EXIT_OK
        att = json.loads((tmp_path / "attribution.json").read_text())
        total = att["base_value"] + sum(a["shap_value"] for a in att["attributions"])
        assert abs(total - att["probabilities"]["TMJ1"]) <= 1e-9

    def test_invalid_row_is_validation_error(self, trained_dir, tmp_path):
        rc = main(["explain", "--model", str(trained_dir / "model.json"),
                   "--row-json", json.dumps({"values": {"bogus": 1},
                                             "gender": "female", "age_years": 9}),
                   "--out-dir", str(tmp_path)])
        assert rc == EXIT_VALIDATION


class TestExport:
    def test_design_matrix_csv(self, cohort_csv, tmp_path):
        rc = main(["export", "--cohort", str(cohort_csv), "--strategy", "lagged",
                   "--k", "1", "--out-dir", str(tmp_path), "--out", "design.csv"])
        assert rc == EXIT_OK
        lines = (tmp_path / "design.csv").read_text().splitlines()
        header = lines[0].split(",")
        assert header[:3] == ["__patient_id", "__exam_index", "__label"]
        assert any(c.endswith("_lag1") for c in header)


class TestPlotSummary:
    def test_renders_png(self, trained_dir, tmp_path):
        out = tmp_path / "plot.png"
        rc = main(["plot-summary", "--summary", str(trained_dir / "shap_points.csv"),
                   "--out", str(out)])
        assert rc == EXIT_OK
        assert out.exists() and out.stat().st_size > 1000

    def test_empty_summary_fails_without_file(self, tmp_path, capsys):
        empty = tmp_path / "empty.csv"
        empty.write_text("feature,row_index,shap_value,feature_value\n")
        out = tmp_path / "plot.png"
        rc = main(["plot-summary", "--summary", str(empty), "--out", str(out)])
        assert rc == EXIT_VALIDATION
        assert not out.exists()


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
