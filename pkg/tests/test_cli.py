import json

import pandas as pd
import pytest

import run_analytics
import run_crmf
from run_crmf import EXIT_BAD_INPUT, EXIT_FAILED, EXIT_OK


def payload(geometry, split, spearman, mode="adaptive"):
    macro = {"spearman": spearman, "kendall_tau_b": 0.0, "c_index": 0.5, "pearson": 0.0,
             "mse": 1.0}
    return {
        "config": {"split": split, "checkpoint": f"{geometry}.ckpt",
                   "evaluated_model": {"geometry": geometry, "routing": "learned",
                                       "pooling": "attention", "head": "adapter"},
                   "checkpoint_config": {"loss": {"mode": mode}}},
        "report": {"macro": macro, "n_samples": 10, "issues": []},
    }


# -------------------------------------------------
# run_crmf.py
# -------------------------------------------------
def test_simulate_then_label(tmp_path):
    sim = tmp_path / "sim"
    assert run_crmf.main(["simulate", "--items", "20", "--targets", "2", "--pairs-per-item", "20",
                          "--out", str(sim)]) == EXIT_OK
    out = tmp_path / "label"
    assert run_crmf.main(["label", str(sim / "comparisons.tsv"), "--truth", str(sim / "truth.json"),
                          "--out", str(out)]) == EXIT_OK
    scores = json.loads((out / "scores.json").read_text())
    assert len(scores["scores"]) == 20
    assert "recovery" in scores["solver"]
    assert scores["config"]["run"]["out"] == str(out)


def test_label_empty_input_is_bad_input(tmp_path):
    path = tmp_path / "empty.tsv"
    path.write_text("")
    assert run_crmf.main(["label", str(path), "--out", str(tmp_path)]) == EXIT_BAD_INPUT


def test_missing_config_file_is_bad_input(tmp_path):
    code = run_crmf.main(["verify", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)])
    assert code == EXIT_BAD_INPUT


def test_negative_lambda_is_bad_input(tmp_path):
    path = tmp_path / "c.tsv"
    path.write_text("0\t1\t0\tA\n")
    code = run_crmf.main(["label", str(path), "--lambda-nuc", "-1", "--out", str(tmp_path)])
    assert code == EXIT_BAD_INPUT


def test_verify_subset(tmp_path):
    assert run_crmf.main(["verify", "--only", "soft_winsorization", "svt_optimality",
                          "--out", str(tmp_path)]) == EXIT_OK
    result = json.loads((tmp_path / "verify.json").read_text())
    assert result["passed"] is True
    assert [c["name"] for c in result["checks"]] == ["soft_winsorization", "svt_optimality"]


def test_verify_failure_exit_code(tmp_path, monkeypatch):
    from geometry import manifolds
    monkeypatch.setattr(manifolds, "BALL_MARGIN", 0.0)
    assert run_crmf.main(["verify", "--only", "manifold_closure",
                          "--out", str(tmp_path)]) == EXIT_FAILED


def test_winsorize_command(tmp_path):
    from data.metadata_reader import SCORE_KEYS, ClipRecord, write_metadata
    records = [ClipRecord(id=f"c{i}", user_no=f"u{i}",
                          scores={k: float(i * (j + 1)) for j, k in enumerate(SCORE_KEYS)})
               for i in range(6)]
    write_metadata(tmp_path / "meta.json", records)
    assert run_crmf.main(["winsorize", str(tmp_path / "meta.json"),
                          "--out", str(tmp_path / "w")]) == EXIT_OK
    out = json.loads((tmp_path / "w" / "winsorized_scores.json").read_text())
    assert [r["id"] for r in out["scores"]] == [r.id for r in records]
    assert (tmp_path / "w" / "target_statistics.csv").exists()


def test_train_rejects_half_real_data_flags(tmp_path):
    code = run_crmf.main(["train", "--preset", "tiny", "--metadata", str(tmp_path / "m.json"),
                          "--out", str(tmp_path)])
    assert code == EXIT_BAD_INPUT


@pytest.mark.slow
def test_synthetic_train_then_eval(tmp_path):
    common = ["--preset", "tiny", "--clips", "60", "--users", "12", "--out", str(tmp_path)]
    assert run_crmf.main(["train", "--epochs", "2", "--batch", "4", "--accum", "2",
                          *common]) == EXIT_OK
    checkpoints = sorted((tmp_path / "checkpoints").glob("*_best.ckpt"))
    assert len(checkpoints) == 1
    assert run_crmf.main(["eval", str(checkpoints[0]), "--split", "test",
                          "--out", str(tmp_path)]) == EXIT_OK
    assert run_crmf.main(["eval", str(checkpoints[0]), "--split", "test", "--routing", "uniform",
                          "--out", str(tmp_path)]) == EXIT_OK
    reports = sorted((tmp_path / "reports").glob("*.json"))
    assert len(reports) == 2
    assert run_analytics.main(tmp_path / "reports", tmp_path / "summary.csv") == 0
    summary = pd.read_csv(tmp_path / "summary.csv")
    assert len(summary) == 2


# -------------------------------------------------
# run_analytics.py
# -------------------------------------------------
def test_comparison_gap_to_reference():
    df = run_analytics.calculate_comparison([
        payload("all", "test", 0.40),
        payload("hyperbolic", "test", 0.30),
        payload("euclidean", "val", 0.20),
    ])
    assert list(df["Variant"])[:2] == ["all | learned | attention | adapter | adaptive",
                                       "hyperbolic | learned | attention | adapter | adaptive"]
    test_rows = df[df["Split"] == "test"].set_index("Checkpoint")
    assert test_rows.loc["hyperbolic.ckpt", "DeltaSpearman"] == pytest.approx(-0.1)
    assert test_rows.loc["all.ckpt", "DeltaSpearman"] == pytest.approx(0.0)
    assert pd.isna(df[df["Split"] == "val"]["DeltaSpearman"]).all()


def test_comparison_of_nothing_is_empty():
    assert run_analytics.calculate_comparison([]).empty


def test_analytics_without_reports(tmp_path):
    assert run_analytics.main(tmp_path / "reports", tmp_path / "summary.csv") == 1


def test_analytics_skips_foreign_json(tmp_path):
    reports = tmp_path / "reports"
    reports.mkdir()
    (reports / "a.json").write_text(json.dumps(payload("all", "test", 0.5)))
    (reports / "notes.json").write_text(json.dumps({"hello": 1}))
    assert run_analytics.main(reports, tmp_path / "summary.csv") == 0
    assert len(pd.read_csv(tmp_path / "summary.csv")) == 1
