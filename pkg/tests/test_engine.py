import json

import numpy as np
import pandas as pd
import pytest

from data.metadata_reader import SCORE_KEYS
from engine.epoch_tracker import EpochTracker
from engine.eval_engine import ablate, evaluate_model, predict_batches, run_eval
from engine.label_runner import (recovery_report, run_label, run_simulate, target_names_for)
from engine.train_engine import (EarlyStopping, TrainEngine, TrainingAborted, active_components,
                                 make_batches)
from engine import verify_suite
from geometry import manifolds
from losses.objectives import LossConfig
from model.config import ModelConfig
from model.crmf import CrmfModel
from tensorcore import NonFiniteError
from tests.conftest import make_bundles
from utils.config import resolve_config


@pytest.fixture
def config():
    return resolve_config(run_overrides={"preset": "tiny", "epochs": 2, "batch": 2, "accum": 2,
                                         "seed": 0})


@pytest.fixture
def splits():
    bundles = make_bundles(12, 16, seed=3, users=6)
    return bundles[:8], bundles[8:]


@pytest.fixture
def engine(config, splits, tmp_path):
    train, val = splits
    return TrainEngine(config, train, val, tmp_path / "run", run_name="smoke")


# -------------------------------------------------
# BUILDING BLOCKS
# -------------------------------------------------
def test_early_stopping_needs_strict_improvement():
    stopper = EarlyStopping(patience=2)
    assert stopper.update(0.5)
    assert not stopper.update(0.5)
    assert not stopper.update(float("nan"))
    assert stopper.should_stop
    assert stopper.best == 0.5


def test_early_stopping_state_roundtrip():
    stopper = EarlyStopping(patience=3)
    stopper.update(0.2)
    stopper.update(0.1)
    other = EarlyStopping()
    other.load_state_dict(stopper.state_dict())
    assert other.best == 0.2 and other.bad_epochs == 1 and other.patience_left == 2


def test_make_batches_merges_single_tail():
    batches = make_batches(7, 2, np.random.default_rng(0))
    assert [len(b) for b in batches] == [2, 2, 3]
    assert sorted(np.concatenate(batches).tolist()) == list(range(7))
    assert [len(b) for b in make_batches(1, 4, np.random.default_rng(0))] == [1]


@pytest.mark.parametrize("overrides, loss, expected", [
    ({}, {}, ("huber", "corr", "cov", "entropy", "balance", "headreg")),
    ({"routing": "uniform"}, {}, ("huber", "corr", "cov", "headreg")),
    ({"geometry": "euclidean"}, {}, ("huber", "corr", "cov", "headreg")),
    ({"head": "linear"}, {}, ("huber", "corr", "cov", "entropy", "balance")),
    ({}, {"mode": "mse"}, ("mse",)),
])
def test_active_components(overrides, loss, expected):
    model = CrmfModel(ModelConfig.tiny(**overrides))
    assert active_components(model, LossConfig.from_dict(loss)) == expected


# -------------------------------------------------
# TRAINING
# -------------------------------------------------
def test_engine_step_counts(engine):
    assert engine.batches_per_epoch == 4
    assert engine.steps_per_epoch == 2
    assert engine.total_steps == 4
    assert "balancer.alpha" in engine.params


def test_engine_rejects_bad_inputs(config, splits, tmp_path):
    train, val = splits
    with pytest.raises(ValueError):
        TrainEngine(config, train[:1], val, tmp_path)
    with pytest.raises(ValueError):
        TrainEngine(config, train, val[:1], tmp_path)
    narrow = make_bundles(4, 16, n_targets=3)
    with pytest.raises(ValueError):
        TrainEngine(config, narrow, narrow, tmp_path)


def test_fit_writes_checkpoints_and_history(engine, tmp_path):
    summary = engine.fit(verbose=False)
    assert summary["epochs"] == 2
    assert np.isfinite(summary["best_val_spearman"])
    assert (tmp_path / "run" / "checkpoints" / "smoke_last.ckpt").exists()
    assert (tmp_path / "run" / "checkpoints" / "smoke_best.ckpt").exists()
    epochs = pd.read_csv(tmp_path / "run" / "history" / "smoke_epochs.csv")
    assert list(epochs["Epoch"]) == [1, 2]
    steps = pd.read_csv(tmp_path / "run" / "history" / "smoke_steps.csv")
    assert len(steps) == 4
    assert {"loss_huber", "beta_huber", "route_hyperbolic", "LR"} <= set(steps.columns)
    assert engine.optimizer.state.step == 4


def test_step_reports_components(engine):
    batches = make_batches(len(engine.train), engine.run.batch, engine.shuffle_rng)
    result = engine.step(batches[:2])
    assert list(result["components"]) == list(engine.components)
    assert sum(result["beta"].values()) == pytest.approx(1.0)
    assert result["applied"]
    assert np.isfinite(result["loss"])


def test_resume_continues_identically(config, splits, engine, tmp_path):
    train, val = splits
    engine.train_epoch()
    path = engine.save(tmp_path / "resume.ckpt")
    expected = engine.train_epoch()

    resumed = TrainEngine.resume(path, config, train, val, tmp_path / "other")
    assert resumed.epoch == 1
    assert resumed.run_name == "smoke"
    assert resumed.train_epoch() == pytest.approx(expected, rel=1e-12, abs=1e-14)
    for name, p in engine.params.items():
        np.testing.assert_allclose(resumed.params[name].data, p.data, rtol=1e-12, atol=1e-14)


def test_resume_rejects_other_architecture(splits, engine, tmp_path):
    train, val = splits
    path = engine.save(tmp_path / "x.ckpt")
    other = resolve_config(run_overrides={"preset": "tiny"}, model_overrides={"head": "linear"})
    with pytest.raises(ValueError):
        TrainEngine.resume(path, other, train, val, tmp_path)


def test_abort_writes_diagnostics(engine, monkeypatch, tmp_path):
    def broken(bundles, rng=None):
        raise NonFiniteError("log")

    monkeypatch.setattr(engine.model, "forward", broken)
    with pytest.raises(TrainingAborted) as exc:
        engine.train_epoch()
    dump = json.loads(exc.value.dump_path.read_text())
    assert "non-finite" in dump["message"]
    assert dump["epoch"] == 1
    assert len(dump["clips"]) == 2
    assert "config" in dump and "parameter_norms" in dump
    issues = pd.read_csv(tmp_path / "run" / "history" / "smoke_issues.csv")
    assert list(issues["STAGE"]) == ["train_step"]


def test_epoch_tracker_appends(tmp_path):
    tracker = EpochTracker("r", tmp_path)
    tracker.new_epoch(1)
    tracker.record_epoch(1.0, 0.1, 0.1, 5, 0)
    tracker.save()
    tracker.new_epoch(2)
    tracker.record_epoch(0.9, 0.2, 0.2, 5, 0)
    tracker.save()
    assert tracker.epoch_rows == []
    frame = pd.read_csv(tmp_path / "history" / "r_epochs.csv")
    assert list(frame["Epoch"]) == [1, 2]


# -------------------------------------------------
# EVALUATION
# -------------------------------------------------
@pytest.fixture
def checkpoint(engine, tmp_path):
    engine.train_epoch()
    return engine.save(tmp_path / "eval.ckpt")


def test_eval_reports_are_byte_identical(checkpoint, splits, tmp_path):
    _, val = splits
    names = list(SCORE_KEYS)
    _, first = run_eval(checkpoint, val, "val", tmp_path / "a.json", target_names=names,
                        verbose=False)
    _, second = run_eval(checkpoint, val, "val", tmp_path / "b.json", target_names=names,
                         verbose=False)
    assert first.read_bytes() == second.read_bytes()
    payload = json.loads(first.read_text())
    assert payload["config"]["split"] == "val"
    assert payload["config"]["epoch"] == 1


def test_threaded_prediction_matches_serial(engine):
    bundles = make_bundles(6, 16, seed=9)
    serial = predict_batches(engine.model, bundles, batch_size=2, workers=1)
    threaded = predict_batches(engine.model, bundles, batch_size=2, workers=2)
    np.testing.assert_array_equal(serial, threaded)
    np.testing.assert_allclose(serial, engine.model.predict(bundles), atol=1e-12)
    assert predict_batches(engine.model, []).shape == (0, 12)


def test_ablate(engine):
    model = engine.model
    assert ablate(model, None) is model
    assert ablate(model, {"routing": None}) is model
    uniform = ablate(model, {"routing": "uniform"})
    assert uniform.config.routing == "uniform"
    single = ablate(model, {"geometry": "euclidean"})
    assert single.predict(make_bundles(2, 16)).shape == (2, 12)
    with pytest.raises(ValueError):
        ablate(model, {"pooling": "mean"})


def test_evaluate_model_checks_target_width(engine):
    with pytest.raises(ValueError):
        evaluate_model(engine.model, make_bundles(3, 16, n_targets=4))


# -------------------------------------------------
# LABELING
# -------------------------------------------------
def test_simulate_then_label_recovers_utilities(tmp_path):
    paths = run_simulate(tmp_path, seed=6, verbose=False)
    summary = run_label(paths["comparisons"], tmp_path / "scores.json", truth=paths["truth"],
                        verbose=False)
    assert summary["n_items"] == 60 and summary["n_targets"] == 3
    assert summary["recovery"]["min_spearman"] >= 0.9
    assert summary["objective_final"] <= summary["objective_initial"]
    scores = json.loads((tmp_path / "scores.json").read_text())
    assert len(scores["scores"]) == 60
    assert scores["target_names"] == ["target_0", "target_1", "target_2"]


def test_label_records_malformed_lines(tmp_path):
    path = tmp_path / "c.tsv"
    path.write_text("a\tb\t0\tA\nb\tc\t0\tB\nc\ta\t0\tA\nbroken line\n")
    summary = run_label(path, tmp_path / "scores.json", verbose=False)
    assert summary["n_items"] == 3
    issues = pd.read_csv(tmp_path / "scores_issues.csv")
    assert len(issues) == 1


def test_label_rejects_empty_input(tmp_path):
    path = tmp_path / "empty.tsv"
    path.write_text("# nothing here\n")
    with pytest.raises(ValueError):
        run_label(path, tmp_path / "scores.json", verbose=False)


def test_label_rejects_too_small_item_count(tmp_path):
    path = tmp_path / "c.tsv"
    path.write_text("0\t1\t0\tA\n1\t2\t0\tA\n")
    with pytest.raises(ValueError):
        run_label(path, tmp_path / "scores.json", n_items=2, verbose=False)


def test_target_names_and_recovery_report():
    assert target_names_for(12) == list(SCORE_KEYS)
    assert target_names_for(2) == ["target_0", "target_1"]
    theta = np.arange(10.0).reshape(5, 2)
    report = recovery_report(theta, theta)
    assert report["min_spearman"] == pytest.approx(1.0)
    with pytest.raises(ValueError):
        recovery_report(theta, theta[:, :1])


# -------------------------------------------------
# VERIFY
# -------------------------------------------------
def test_cheap_checks_pass():
    passed, results = verify_suite.run_verify(
        only=["manifold_closure", "gyrogroup_identities", "soft_winsorization", "svt_optimality"],
        verbose=False)
    assert passed, [r.detail for r in results if not r.passed]


def test_wrong_ball_margin_is_caught(monkeypatch):
    monkeypatch.setattr(manifolds, "BALL_MARGIN", 0.0)
    passed, results = verify_suite.run_verify(only=["manifold_closure"], verbose=False)
    assert not passed
    assert not results[0].passed


def test_raising_check_counts_as_failure(monkeypatch):
    monkeypatch.setitem(verify_suite.CHECKS, "svt_optimality", lambda: 1 / 0)
    passed, results = verify_suite.run_verify(only=["svt_optimality"], verbose=False)
    assert not passed
    assert "ZeroDivisionError" in results[0].detail


def test_unknown_check_name():
    with pytest.raises(ValueError):
        verify_suite.run_verify(only=["astrology"], verbose=False)


@pytest.mark.slow
def test_full_verify_suite():
    passed, results = verify_suite.run_verify(verbose=False)
    assert passed, [r.detail for r in results if not r.passed]


def test_benchmark_is_not_in_default_suite():
    assert "synthetic_benchmark" not in verify_suite.CHECKS
    assert "synthetic_benchmark" in verify_suite.EXTENDED_CHECKS


@pytest.mark.parametrize("scores, expected", [
    ({"full": 0.90, "hyperbolic": 0.85, "spherical": 0.88, "euclidean": 0.8999,
      "uniform": 0.70}, True),
    ({"full": 0.90, "hyperbolic": 0.85, "spherical": 0.90, "euclidean": 0.80,
      "uniform": 0.70}, False),
    ({"full": 0.79, "hyperbolic": 0.5, "spherical": 0.5, "euclidean": 0.5,
      "uniform": 0.5}, False),
])
def test_benchmark_check_needs_threshold_and_strict_ordering(monkeypatch, scores, expected):
    monkeypatch.setattr(verify_suite, "run_benchmark", lambda out_dir, seed=0, **kw: scores)
    result = verify_suite.check_synthetic_benchmark()
    assert result.passed is expected
    assert "gap" in result.detail


def test_benchmark_trains_each_variant(tmp_path):
    variants = {"full": {}, "uniform": {"routing": "uniform"}}
    scores = verify_suite.run_benchmark(tmp_path, n_clips=40, epochs=1, preset="tiny",
                                        variants=variants)
    assert set(scores) == {"full", "uniform"}
    assert all(np.isfinite(v) for v in scores.values())
    assert (tmp_path / "uniform" / "checkpoints" / "benchmark_uniform_best.ckpt").exists()


@pytest.mark.slow
def test_synthetic_benchmark_ablation_ordering():
    result = verify_suite.check_synthetic_benchmark(seed=0)
    print(result.detail)
    assert result.passed, result.detail
