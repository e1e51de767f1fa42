"""Command-line behavior: commands, exit codes, and byte-stable outputs."""

import json
import os
import subprocess
import sys

import numpy as np
import pytest

from prioradapt.cli import main

DATA = os.path.join(os.path.dirname(__file__), "data")


def data(name: str) -> str:
    return os.path.join(DATA, name)


def read_bytes(path: str) -> bytes:
    with open(path, "rb") as fp:
        return fp.read()


def run(args, tmp_path, out_name="out"):
    out = str(tmp_path / out_name)
    code = main(["--output", out, *args])
    return code, out


class TestNormalize:
    def test_counts_to_rates(self, tmp_path, capsys):
        code = main(["normalize", data("fixture_confusion_raw.csv")])
        assert code == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0] == "a,b"
        assert [float(x) for x in lines[1].split(",")] == [0.8, 0.2]
        assert [float(x) for x in lines[2].split(",")] == [0.4, 0.6]

    def test_idempotent(self, tmp_path):
        code, once = run(["normalize", data("fixture_confusion_raw.csv")], tmp_path, "once")
        assert code == 0
        code, twice = run(["normalize", once], tmp_path, "twice")
        assert code == 0
        assert read_bytes(once) == read_bytes(twice)

    def test_zero_row_exit_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("a,b\n1,0\n0,0\n", encoding="utf-8")
        code = main(["normalize", str(bad)])
        assert code == 2
        assert "'b'" in capsys.readouterr().err

    def test_missing_file_exit_4(self, tmp_path):
        assert main(["normalize", str(tmp_path / "nope.csv")]) == 4


class TestEstimate:
    def test_identity_naive(self, tmp_path, capsys):
        conf = tmp_path / "id.csv"
        conf.write_text("a,b,c\n1,0,0\n0,1,0\n0,0,1\n", encoding="utf-8")
        stream = tmp_path / "d.txt"
        stream.write_text("0\n0\n1\n2\n", encoding="utf-8")
        code = main(["estimate", str(conf), str(stream), "--method", "naive"])
        assert code == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["methods"]["naive"]["priors"] == {"a": 0.5, "b": 0.25, "c": 0.25}
        assert doc["total_decisions"] == 4

    def test_consistent_fixture_qp_recovers(self, tmp_path, capsys):
        code = main([
            "estimate", data("fixture_confusion3.csv"), data("fixture_decisions.txt"),
            "--method", "qp",
        ])
        assert code == 0
        doc = json.loads(capsys.readouterr().out)
        priors = doc["methods"]["quadratic_program"]["priors"]
        # The decision histogram is exactly the forward image of (0.7, 0.2, 0.1).
        assert abs(priors["a"] - 0.7) <= 1e-6
        assert abs(priors["b"] - 0.2) <= 1e-6
        assert abs(priors["c"] - 0.1) <= 1e-6

    def test_scores_stream(self, tmp_path, capsys):
        conf = tmp_path / "id.csv"
        conf.write_text("a,b\n1,0\n0,1\n", encoding="utf-8")
        scores = tmp_path / "s.csv"
        scores.write_text("s_a,s_b\n0.9,0.1\n0.2,0.8\n0.7,0.3\n", encoding="utf-8")
        code = main(["estimate", str(conf), str(scores), "--method", "naive"])
        assert code == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["methods"]["naive"]["priors"] == {"a": 2 / 3, "b": 1 / 3}

    def test_bad_scores_row_exit_2(self, tmp_path, capsys):
        conf = tmp_path / "id.csv"
        conf.write_text("a,b\n1,0\n0,1\n", encoding="utf-8")
        scores = tmp_path / "s.csv"
        scores.write_text("s_a,s_b\n0.9,0.3\n", encoding="utf-8")
        code = main(["estimate", str(conf), str(scores)])
        assert code == 2
        assert ":2:" in capsys.readouterr().err  # line number named

    def test_dimension_mismatch_exit_2(self, tmp_path):
        conf = tmp_path / "id.csv"
        conf.write_text("a,b\n1,0\n0,1\n", encoding="utf-8")
        stream = tmp_path / "d.txt"
        stream.write_text("0\n2\n", encoding="utf-8")
        assert main(["estimate", str(conf), str(stream)]) == 2

    def test_window_restricts_histogram(self, tmp_path, capsys):
        conf = tmp_path / "id.csv"
        conf.write_text("a,b\n1,0\n0,1\n", encoding="utf-8")
        stream = tmp_path / "d.txt"
        stream.write_text("0\n0\n0\n1\n1\n", encoding="utf-8")
        code = main(["estimate", str(conf), str(stream), "--method", "naive", "--window", "2"])
        assert code == 0
        doc = json.loads(capsys.readouterr().out)
        # Only the trailing two decisions (both class b) remain.
        assert doc["methods"]["naive"]["priors"] == {"a": 0.0, "b": 1.0}
        assert doc["total_decisions"] == 2

    def test_singular_inverse_exit_3(self, tmp_path, capsys):
        conf = tmp_path / "sing.csv"
        conf.write_text("a,b\n0.5,0.5\n0.5,0.5\n", encoding="utf-8")
        stream = tmp_path / "d.txt"
        stream.write_text("0\n1\n", encoding="utf-8")
        code = main(["estimate", str(conf), str(stream), "--method", "inverse"])
        assert code == 3
        doc = json.loads(capsys.readouterr().out)
        assert "error" in doc["methods"]["matrix_inverse"]

    def test_all_with_partial_failure_still_succeeds(self, tmp_path, capsys):
        conf = tmp_path / "sing.csv"
        conf.write_text("a,b\n0.5,0.5\n0.5,0.5\n", encoding="utf-8")
        stream = tmp_path / "d.txt"
        stream.write_text("0\n1\n0\n", encoding="utf-8")
        code = main(["estimate", str(conf), str(stream), "--method", "all"])
        assert code == 0
        doc = json.loads(capsys.readouterr().out)
        assert "error" in doc["methods"]["matrix_inverse"]
        assert "priors" in doc["methods"]["naive"]
        assert "priors" in doc["methods"]["quadratic_program"]


class TestReweight:
    def test_flip_example(self, tmp_path, capsys):
        code = main([
            "reweight", data("fixture_scores.csv"), "--priors", data("fixture_priors.json"),
        ])
        assert code == 0
        lines = capsys.readouterr().out.strip().splitlines()
        first = lines[1].split(",")
        assert first[0] == "0" and first[1] == "1"  # baseline a, adapted b

    def test_uniform_priors_match_baseline(self, tmp_path, capsys):
        priors = tmp_path / "u.json"
        priors.write_text(json.dumps({"a": 1 / 3, "b": 1 / 3, "c": 1 / 3}), encoding="utf-8")
        code = main(["reweight", data("fixture_scores.csv"), "--priors", str(priors)])
        assert code == 0
        for line in capsys.readouterr().out.strip().splitlines()[1:]:
            cells = line.split(",")
            assert cells[0] == cells[1]

    def test_empty_file(self, tmp_path):
        empty = tmp_path / "empty.csv"
        empty.write_text("", encoding="utf-8")
        code, out = run(["reweight", str(empty), "--priors", data("fixture_priors.json")], tmp_path)
        assert code == 0
        assert read_bytes(out) == b""

    def test_lenient_skips_bad_rows(self, tmp_path, capsys):
        scores = tmp_path / "s.csv"
        scores.write_text("s_a,s_b,s_c\n0.5,0.25,0.25\n0.9,0.3,0.1\n", encoding="utf-8")
        code = main(["reweight", str(scores), "--priors", data("fixture_priors.json"), "--lenient"])
        assert code == 0
        out = capsys.readouterr().out.strip().splitlines()
        assert len(out) == 2  # header + one good row

    def test_strict_fails_on_bad_rows(self, tmp_path):
        scores = tmp_path / "s.csv"
        scores.write_text("s_a,s_b,s_c\n0.9,0.3,0.1\n", encoding="utf-8")
        code = main(["reweight", str(scores), "--priors", data("fixture_priors.json")])
        assert code == 2

    def test_needs_exactly_one_source(self, tmp_path):
        assert main(["reweight", data("fixture_scores.csv")]) == 2
        assert main([
            "reweight", data("fixture_scores.csv"),
            "--priors", data("fixture_priors.json"),
            "--confusion", data("fixture_confusion3.csv"),
        ]) == 2

    def test_live_reestimation(self, tmp_path, capsys):
        # Identity confusion, stream dominated by class b: once priors are
        # re-estimated, a borderline b-vs-a record flips to b.
        conf = tmp_path / "id.csv"
        conf.write_text("a,b\n1,0\n0,1\n", encoding="utf-8")
        rows = ["s_a,s_b"] + ["0.1,0.9"] * 10 + ["0.52,0.48"]
        scores = tmp_path / "s.csv"
        scores.write_text("\n".join(rows) + "\n", encoding="utf-8")
        code = main([
            "reweight", str(scores), "--confusion", str(conf),
            "--method", "naive", "--reestimate-every", "5",
        ])
        assert code == 0
        lines = capsys.readouterr().out.strip().splitlines()
        last = lines[-1].split(",")
        assert last[0] == "0"  # baseline still says a
        assert last[1] == "1"  # estimated priors say b

    def test_live_mode_needs_cadence(self, tmp_path):
        code = main([
            "reweight", data("fixture_scores.csv"),
            "--confusion", data("fixture_confusion3.csv"),
        ])
        assert code == 2


class TestSimulate:
    def test_deterministic_files(self, tmp_path):
        code = main(["--quiet", "--output", str(tmp_path / "one"), "simulate", data("fixture_scenario.json")])
        assert code == 0
        code = main(["--quiet", "--output", str(tmp_path / "two"), "simulate", data("fixture_scenario.json")])
        assert code == 0
        assert read_bytes(str(tmp_path / "one.scores.csv")) == read_bytes(str(tmp_path / "two.scores.csv"))
        assert read_bytes(str(tmp_path / "one.truth.csv")) == read_bytes(str(tmp_path / "two.truth.csv"))

    def test_degenerate_priors_all_one_class(self, tmp_path):
        doc = {
            "labels": ["a", "b"],
            "active_classes": ["a"],
            "true_priors": {"a": 1.0},
            "transfer_size": 5,
            "test_size": 5,
            "seed": 1,
            "classifier": {"diagonal": 0.9, "confusion_seed": 0},
        }
        scen = tmp_path / "scen.json"
        scen.write_text(json.dumps(doc), encoding="utf-8")
        code = main(["--quiet", "--output", str(tmp_path / "sim"), "simulate", str(scen)])
        assert code == 0
        truth = (tmp_path / "sim.truth.csv").read_text(encoding="utf-8")
        rows = [l for l in truth.splitlines() if l and not l.startswith("#")][1:]
        assert all(row.split(",")[1] == "a" for row in rows)

    def test_drift_boundary_marked(self, tmp_path):
        code = main(["--quiet", "--output", str(tmp_path / "sim"), "simulate", data("fixture_scenario.json")])
        assert code == 0
        truth = (tmp_path / "sim.truth.csv").read_text(encoding="utf-8")
        assert "# segment 1 from row 12" in truth
        segments = [
            int(line.split(",")[2])
            for line in truth.splitlines()
            if line and not line.startswith("#") and not line.startswith("index")
        ]
        assert segments[:12] == [0] * 12
        assert segments[12:] == [1] * 8

    def test_requires_output(self, tmp_path):
        assert main(["simulate", data("fixture_scenario.json")]) == 2

    def test_bad_spec_exit_2(self, tmp_path, capsys):
        scen = tmp_path / "scen.json"
        scen.write_text(json.dumps({"labels": ["a", "b"]}), encoding="utf-8")
        code = main(["--output", str(tmp_path / "sim"), "simulate", str(scen)])
        assert code == 2
        assert "scenario.active_classes" in capsys.readouterr().err


class TestEvaluate:
    def test_perfect_classifier_all_ones(self, tmp_path, capsys):
        conf_rows = "\n".join(",".join("1" if i == j else "0" for j in range(3)) for i in range(3))
        (tmp_path / "id.csv").write_text("a,b,c\n" + conf_rows + "\n", encoding="utf-8")
        doc = {
            "labels": ["a", "b", "c"],
            "active_classes": ["a"],
            "true_priors": {"a": 1.0},
            "transfer_size": 20,
            "test_size": 20,
            "seed": 5,
            "classifier": {"confusion_csv": "id.csv"},
        }
        scen = tmp_path / "scen.json"
        scen.write_text(json.dumps(doc), encoding="utf-8")
        code = main(["--format", "json", "evaluate", str(scen), "--folds", "2"])
        assert code == 0
        out = json.loads(capsys.readouterr().out)
        for row in out["rows"]:
            assert row["accuracy_mean"] == 1.0

    def test_rejects_single_fold(self, tmp_path):
        assert main(["evaluate", data("fixture_scenario.json"), "--folds", "1"]) == 2

    def test_csv_format(self, tmp_path, capsys):
        doc = {
            "labels": ["a", "b", "c"],
            "active_classes": ["a", "b"],
            "true_priors": {"a": 0.5, "b": 0.5},
            "transfer_size": 30,
            "test_size": 30,
            "seed": 5,
            "classifier": {"diagonal": 0.7, "confusion_seed": 2},
        }
        scen = tmp_path / "scen.json"
        scen.write_text(json.dumps(doc), encoding="utf-8")
        code = main(["--format", "csv", "evaluate", str(scen), "--folds", "2"])
        assert code == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0] == "scenario,method,accuracy_mean,accuracy_std,folds,prior_l1_error,best,error"
        assert len(lines) == 7  # header + six methods
        assert sum(line.split(",")[6] == "1" for line in lines[1:]) == 1

    def test_drift_scenario_reports_segments(self, tmp_path, capsys):
        code = main(["evaluate", data("fixture_scenario.json"), "--window", "8"])
        assert code == 0
        out = capsys.readouterr().out
        assert "demo-drift/segment-0" in out
        assert "demo-drift/segment-1" in out
        assert "extension" in out

    def test_thread_fanout_matches_sequential(self, tmp_path, monkeypatch):
        monkeypatch.setenv("PRIOR_ADAPT_THREADS", "4")
        code, threaded = run(["evaluate", "--folds", "2"], tmp_path, "threaded")
        assert code == 0
        monkeypatch.delenv("PRIOR_ADAPT_THREADS")
        code, sequential = run(["evaluate", "--folds", "2"], tmp_path, "sequential")
        assert code == 0
        assert read_bytes(threaded) == read_bytes(sequential)


class TestGlobalFlagPlacement:
    def test_flags_accepted_before_or_after_subcommand(self, tmp_path):
        before = str(tmp_path / "before.csv")
        after = str(tmp_path / "after.csv")
        assert main(["--output", before, "normalize", data("fixture_confusion_raw.csv")]) == 0
        assert main(["normalize", data("fixture_confusion_raw.csv"), "--output", after]) == 0
        assert read_bytes(before) == read_bytes(after)

    def test_trailing_seed_and_format(self, tmp_path, capsys):
        doc = {
            "labels": ["a", "b", "c"],
            "active_classes": ["a", "b"],
            "true_priors": {"a": 0.5, "b": 0.5},
            "transfer_size": 30,
            "test_size": 30,
            "seed": 5,
            "classifier": {"diagonal": 0.7, "confusion_seed": 2},
        }
        scen = tmp_path / "scen.json"
        scen.write_text(json.dumps(doc), encoding="utf-8")
        code = main(["evaluate", str(scen), "--folds", "2", "--format", "json", "--seed", "9"])
        assert code == 0
        out = json.loads(capsys.readouterr().out)
        assert out["scenarios"] == ["scen"]


class TestEntryPoint:
    def test_module_invocation(self, tmp_path):
        proc = subprocess.run(
            [sys.executable, "-m", "prioradapt", "normalize", data("fixture_confusion_raw.csv")],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0
        assert proc.stdout.splitlines()[0] == "a,b"

    def test_unknown_command_usage_error(self):
        proc = subprocess.run(
            [sys.executable, "-m", "prioradapt", "frobnicate"],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 2
