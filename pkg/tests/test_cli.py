"""End-to-end command-line behavior: commands, exit codes, manifests."""
from __future__ import annotations

import csv
import json
import os
import re

import numpy as np
import pytest

import fairerm as fe
from conftest import TINY_TRAIN, GOLDEN_ALPHA, run_cli


@pytest.fixture(scope="module")
def toy_csvs(tmp_path_factory):
    """Small synthetic train/test CSV pair shared by the command tests."""
    root = tmp_path_factory.mktemp("toy")
    train_path = root / "train.csv"
    test_path = root / "test.csv"
    code, _, _ = run_cli(["synth", "--seed", 11, "--scale", 0.05,
                          "--out-train", train_path, "--out-test", test_path])
    assert code == 0
    return train_path, test_path


def _normalize_duration(text: str) -> str:
    return re.sub(r'"duration_seconds": [0-9.e+-]+', '"duration_seconds": 0',
                  text)


class TestSynth:
    def test_row_counts(self, tmp_path):
        t, e = tmp_path / "t.csv", tmp_path / "e.csv"
        code, out, _ = run_cli(["synth", "--seed", 7, "--scale", 0.1,
                                "--out-train", t, "--out-test", e])
        assert code == 0
        assert sum(1 for _ in open(t)) == 321  # header + 320 rows
        assert sum(1 for _ in open(e)) == 321
        doc = json.loads(out)
        assert doc["manifest"]["command"] == "synth"

    def test_rerun_byte_identical(self, tmp_path):
        args = ["synth", "--seed", 3, "--scale", 0.02]
        p1 = [tmp_path / "a_t.csv", tmp_path / "a_e.csv"]
        p2 = [tmp_path / "b_t.csv", tmp_path / "b_e.csv"]
        run_cli(args + ["--out-train", p1[0], "--out-test", p1[1]])
        run_cli(args + ["--out-train", p2[0], "--out-test", p2[1]])
        assert p1[0].read_bytes() == p2[0].read_bytes()
        assert p1[1].read_bytes() == p2[1].read_bytes()

    def test_scale_zero_is_usage_error(self, tmp_path):
        code, _, err = run_cli(["synth", "--seed", 1, "--scale", 0,
                                "--out-train", tmp_path / "t.csv",
                                "--out-test", tmp_path / "e.csv"])
        assert code == 2

    def test_unwritable_path_is_data_error(self, tmp_path):
        code, _, _ = run_cli(["synth", "--seed", 1, "--scale", 0.01,
                              "--out-train", tmp_path / "no" / "t.csv",
                              "--out-test", tmp_path / "e.csv"])
        assert code == 1


class TestTrain:
    def test_fair_training_report_has_tiny_gap(self, toy_csvs, tmp_path):
        train, _ = toy_csvs
        model_path = tmp_path / "m.json"
        code, out, _ = run_cli([
            "train", "--data", train, "--family", "fair-svm", "--c", 1.0,
            "--epsilon", 0.0, "--no-standardize", "--out-model", model_path])
        assert code == 0
        doc = json.loads(out)
        assert doc["report"]["linear_gap"] <= 1e-8
        assert os.path.exists(model_path)

    def test_inactive_constraint_matches_unconstrained(self, toy_csvs, tmp_path):
        train, _ = toy_csvs
        reports = []
        for i, extra in enumerate((["--family", "svm"],
                                   ["--family", "fair-svm",
                                    "--epsilon", 1e6])):
            code, out, _ = run_cli(
                ["train", "--data", train, "--c", 2.0, "--no-standardize",
                 "--out-model", tmp_path / f"m{i}.json"] + extra)
            assert code == 0
            reports.append(json.loads(out)["report"])
        assert reports[0]["accuracy"] == reports[1]["accuracy"]

    def test_six_row_fixture_matches_golden_alphas(self, tmp_path):
        model_path = tmp_path / "m.json"
        code, out, _ = run_cli([
            "train", "--data", TINY_TRAIN, "--family", "fair-svm",
            "--c", 1.0, "--epsilon", 0.0, "--no-standardize",
            "--tol", 1e-12, "--max-passes", 100000,
            "--out-model", model_path])
        assert code == 0
        with open(GOLDEN_ALPHA, encoding="utf-8") as fh:
            golden = json.load(fh)
        with open(model_path, encoding="utf-8") as fh:
            saved = json.load(fh)
        alpha = np.array(saved["model"]["alpha"])
        np.testing.assert_allclose(alpha, golden["alpha"], atol=1e-6)

    @pytest.mark.filterwarnings("ignore::fairerm.NonConvergenceWarning")
    def test_nonconvergence_still_writes_model(self, toy_csvs, tmp_path):
        train, _ = toy_csvs
        model_path = tmp_path / "m.json"
        code, out, _ = run_cli([
            "train", "--data", train, "--family", "fair-svm",
            "--max-passes", 1, "--out-model", model_path])
        assert code == 3
        assert os.path.exists(model_path)
        assert json.loads(out)["converged"] is False

    def test_missing_data_file(self, tmp_path):
        code, _, _ = run_cli(["train", "--data", tmp_path / "nope.csv",
                              "--out-model", tmp_path / "m.json"])
        assert code == 1

    def test_bad_flag_value(self, tmp_path):
        code, _, _ = run_cli(["train", "--data", TINY_TRAIN, "--c", "abc",
                              "--out-model", tmp_path / "m.json"])
        assert code == 2

    def test_manifest_records_inputs(self, tmp_path):
        code, out, _ = run_cli([
            "train", "--data", TINY_TRAIN, "--no-standardize",
            "--out-model", tmp_path / "m.json"])
        assert code == 0
        manifest = json.loads(out)["manifest"]
        assert manifest["command"] == "train"
        assert manifest["version"] == fe.__version__
        digest = manifest["inputs"][os.fspath(TINY_TRAIN)]
        assert re.fullmatch(r"[0-9a-f]{64}", digest)
        assert "duration_seconds" in manifest
        assert manifest["config"]["c"] == 1.0


class TestEval:
    def test_round_trip_matches_training_report(self, toy_csvs, tmp_path):
        train, _ = toy_csvs
        model_path = tmp_path / "m.json"
        code, out_train, _ = run_cli([
            "train", "--data", train, "--c", 1.0, "--no-standardize",
            "--out-model", model_path])
        assert code == 0
        code, out_eval, _ = run_cli(["eval", "--model", model_path,
                                     "--data", train])
        assert code == 0
        a = json.loads(out_train)["report"]
        b = json.loads(out_eval)["report"]
        assert a["accuracy"] == pytest.approx(b["accuracy"], abs=1e-12)
        assert a["deo"] == pytest.approx(b["deo"], abs=1e-12)

    def test_dimension_mismatch(self, toy_csvs, tmp_path):
        train, _ = toy_csvs
        model_path = tmp_path / "m.json"
        run_cli(["train", "--data", train, "--no-standardize",
                 "--out-model", model_path])
        wide = tmp_path / "wide.csv"
        wide.write_text("x1,x2,x3,label,group\n"
                        "1,2,3,1,a\n0,1,0,1,b\n-1,0,1,-1,a\n-2,1,0,-1,b\n")
        code, _, _ = run_cli(["eval", "--model", model_path, "--data", wide])
        assert code == 1

    def test_missing_model(self, toy_csvs, tmp_path):
        code, _, _ = run_cli(["eval", "--model", tmp_path / "nope.json",
                              "--data", toy_csvs[0]])
        assert code == 1


class TestCv:
    def test_singleton_grid_echoes_point(self, toy_csvs, tmp_path):
        train, _ = toy_csvs
        report = tmp_path / "r.json"
        code, out, _ = run_cli([
            "cv", "--data", train, "--family", "svm", "--c-values", "1.0",
            "--folds", 4, "--seed", 5, "--out-report", report])
        assert code == 0
        doc = json.loads(report.read_text())
        rows = doc["repeats"][0]["rows"]
        assert len(rows) == 1
        assert rows[0]["params"]["C"] == 1.0
        assert doc["repeats"][0]["selected_index"] == 0

    @pytest.mark.filterwarnings("ignore::fairerm.NonConvergenceWarning")
    def test_naive_accuracy_dominates(self, toy_csvs, tmp_path):
        train, _ = toy_csvs
        accs = {}
        for mode, extra in (("nvp", []), ("naive", ["--naive"])):
            report = tmp_path / f"{mode}.json"
            code, _, _ = run_cli(
                ["cv", "--data", train, "--family", "fair-svm",
                 "--c-values", "0.01,1.0,100.0", "--folds", 4, "--seed", 5,
                 "--out-report", report] + extra)
            assert code == 0
            rep = json.loads(report.read_text())["repeats"][0]
            accs[mode] = rep["rows"][rep["selected_index"]]["mean_accuracy"]
        assert accs["naive"] >= accs["nvp"]

    def test_report_reproducible(self, toy_csvs, tmp_path):
        # the same command rerun into the same paths writes the same
        # report (timing aside) and the same table bytes
        train, _ = toy_csvs
        report = tmp_path / "r.json"
        table = tmp_path / "r.csv"
        texts, csvs = [], []
        for _ in range(2):
            code, _, _ = run_cli([
                "cv", "--data", train, "--family", "svm",
                "--c-values", "0.5,2.0", "--folds", 4, "--seed", 9,
                "--out-report", report, "--out-csv", table])
            assert code == 0
            texts.append(_normalize_duration(report.read_text()))
            csvs.append(table.read_bytes())
        assert texts[0] == texts[1]
        assert csvs[0] == csvs[1]

    def test_repeats_reseed_folds(self, toy_csvs, tmp_path):
        train, _ = toy_csvs
        report = tmp_path / "r.json"
        table = tmp_path / "r.csv"
        code, _, _ = run_cli([
            "cv", "--data", train, "--family", "svm", "--c-values", "1.0",
            "--folds", 4, "--seed", 5, "--repeats", 2,
            "--out-report", report, "--out-csv", table])
        assert code == 0
        doc = json.loads(report.read_text())
        assert len(doc["repeats"]) == 2
        assert doc["repeats"][0]["plan_seed"] != doc["repeats"][1]["plan_seed"]
        lines = table.read_text().strip().splitlines()
        assert lines[0].startswith("repeat,")
        assert len(lines) == 1 + 2

    def test_missing_seed_is_usage_error(self, toy_csvs, tmp_path):
        code, _, _ = run_cli(["cv", "--data", toy_csvs[0],
                              "--out-report", tmp_path / "r.json"])
        assert code == 2

    def test_thread_env_does_not_change_results(self, toy_csvs, tmp_path,
                                                monkeypatch):
        train, _ = toy_csvs
        report = tmp_path / "r.json"
        outs = []
        for workers in (None, "4"):
            if workers is None:
                monkeypatch.delenv("FAIR_ERM_THREADS", raising=False)
            else:
                monkeypatch.setenv("FAIR_ERM_THREADS", workers)
            code, _, _ = run_cli([
                "cv", "--data", train, "--family", "svm",
                "--c-values", "0.5,2.0", "--folds", 4, "--seed", 9,
                "--out-report", report])
            assert code == 0
            outs.append(_normalize_duration(report.read_text()))
        assert outs[0] == outs[1]


class TestSweepEpsilon:
    def test_single_value_single_row(self, toy_csvs, tmp_path):
        train, _ = toy_csvs
        out_csv = tmp_path / "sweep.csv"
        code, _, _ = run_cli(["sweep-epsilon", "--data", train,
                              "--epsilons", "0.1", "--out-csv", out_csv])
        assert code == 0
        rows = list(csv.DictReader(out_csv.open()))
        assert len(rows) == 1
        assert float(rows[0]["epsilon"]) == 0.1

    def test_loose_constraint_is_not_fairer(self, toy_csvs, tmp_path):
        train, test = toy_csvs
        out_csv = tmp_path / "sweep.csv"
        code, _, _ = run_cli([
            "sweep-epsilon", "--data", train, "--test-data", test,
            "--epsilons", "0,1e6", "--no-standardize", "--out-csv", out_csv])
        assert code == 0
        rows = list(csv.DictReader(out_csv.open()))
        assert float(rows[0]["deo"]) <= float(rows[1]["deo"])

    def test_default_epsilon_list(self, toy_csvs, tmp_path):
        train, _ = toy_csvs
        out_csv = tmp_path / "sweep.csv"
        code, _, _ = run_cli(["sweep-epsilon", "--data", train,
                              "--out-csv", out_csv])
        assert code == 0
        rows = list(csv.DictReader(out_csv.open()))
        assert [float(r["epsilon"]) for r in rows] == [0, 0.01, 0.1, 0.2, 0.3]

    def test_malformed_epsilon_is_usage_error(self, toy_csvs, tmp_path):
        code, _, _ = run_cli(["sweep-epsilon", "--data", toy_csvs[0],
                              "--epsilons", "abc",
                              "--out-csv", tmp_path / "s.csv"])
        assert code == 2


class TestPreprocess:
    def test_two_features_become_one(self, toy_csvs, tmp_path):
        train, _ = toy_csvs
        out_data = tmp_path / "out.csv"
        out_t = tmp_path / "t.json"
        code, _, _ = run_cli(["preprocess", "--data", train, "--verify",
                              "--out-data", out_data,
                              "--out-transform", out_t])
        assert code == 0
        header = out_data.open().readline().strip().split(",")
        assert len(header) == 3  # one feature + label + group
        doc = json.loads(out_t.read_text())
        assert doc["kind"] == "drop_feature"

    def test_rerun_is_identical(self, toy_csvs, tmp_path):
        train, _ = toy_csvs
        blobs = []
        for name in ("a", "b"):
            out_data = tmp_path / f"{name}.csv"
            code, _, _ = run_cli(["preprocess", "--data", train,
                                  "--out-data", out_data,
                                  "--out-transform", tmp_path / f"{name}.json"])
            assert code == 0
            blobs.append(out_data.read_bytes())
        assert blobs[0] == blobs[1]

    def test_multi_group_projection(self, tmp_path, rng):
        from conftest import random_dataset
        data = random_dataset(rng, n=30, d=3, k=3)
        src = tmp_path / "multi.csv"
        fe.write_csv(data, src)
        out_data = tmp_path / "out.csv"
        code, _, _ = run_cli(["preprocess", "--data", src, "--multi-group",
                              "--verify", "--out-data", out_data,
                              "--out-transform", tmp_path / "t.json"])
        assert code == 0
        header = out_data.open().readline().strip().split(",")
        assert len(header) == 5  # dimension preserved

    def test_degenerate_direction_is_data_error(self, tmp_path):
        src = tmp_path / "flat.csv"
        src.write_text("f0,f1,label,group\n"
                       "1,2,1,a\n1,2,1,b\n0,1,-1,a\n2,0,-1,b\n")
        code, _, _ = run_cli(["preprocess", "--data", src,
                              "--out-data", tmp_path / "o.csv",
                              "--out-transform", tmp_path / "t.json"])
        assert code == 1


class TestConfigFile:
    def test_file_sets_defaults_flags_override(self, toy_csvs, tmp_path):
        train, _ = toy_csvs
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"c": 5.0, "standardize": False}))
        model_path = tmp_path / "m.json"
        code, out, _ = run_cli(["train", "--data", train, "--config", cfg,
                                "--out-model", model_path])
        assert code == 0
        assert json.loads(out)["manifest"]["config"]["c"] == 5.0
        code, out, _ = run_cli(["train", "--data", train, "--config", cfg,
                                "--c", 2.0, "--out-model", model_path])
        assert code == 0
        assert json.loads(out)["manifest"]["config"]["c"] == 2.0

    def test_unknown_key_rejected(self, toy_csvs, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"c": 5.0, "mystery": 1}))
        code, _, _ = run_cli(["train", "--data", toy_csvs[0], "--config", cfg,
                              "--out-model", tmp_path / "m.json"])
        assert code == 2

    def test_unreadable_config(self, toy_csvs, tmp_path):
        code, _, _ = run_cli(["train", "--data", toy_csvs[0],
                              "--config", tmp_path / "nope.json",
                              "--out-model", tmp_path / "m.json"])
        assert code == 2


class TestOutputHygiene:
    def test_stdout_is_machine_clean_json(self, toy_csvs, tmp_path):
        train, _ = toy_csvs
        code, out, err = run_cli([
            "train", "--data", train, "--no-standardize",
            "--out-model", tmp_path / "m.json"])
        assert code == 0
        json.loads(out)  # a single well-formed document
        assert err.strip()  # the human summary went to stderr

    def test_unknown_command_usage_error(self):
        code, _, _ = run_cli(["frobnicate"])
        assert code == 2
