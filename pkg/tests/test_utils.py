import json
import os

import pytest

from model.config import ModelConfig
from utils.config import RunConfig, read_config_file, resolve_config
from utils.runtime import THREADS_ENV, apply_thread_limits, worker_count


# -------------------------------------------------
# CONFIG
# -------------------------------------------------
def test_defaults_use_desk_preset():
    cfg = resolve_config()
    assert cfg.run.preset == "desk"
    assert cfg.model == ModelConfig.desk()
    assert cfg.run.effective_batch == 32


def test_flags_win_over_file_and_file_over_defaults():
    file_values = {"run": {"epochs": 3, "seed": 9}, "model": {"routing": "uniform"},
                   "solver": {"lam": 0.5}}
    cfg = resolve_config(file_values, run_overrides={"epochs": 7, "seed": None},
                         model_overrides={"routing": "hard"})
    assert cfg.run.epochs == 7
    assert cfg.run.seed == 9
    assert cfg.model.routing == "hard"
    assert cfg.solver.lam == 0.5


def test_preset_sets_base_model():
    cfg = resolve_config(run_overrides={"preset": "tiny"}, model_overrides={"pooling": "mean"})
    assert cfg.model == ModelConfig.tiny(pooling="mean")


def test_resolved_config_serialises():
    d = resolve_config(run_overrides={"preset": "tiny"}).to_dict()
    assert set(d) == {"run", "model", "loss", "solver"}
    json.dumps(d)


@pytest.mark.parametrize("overrides", [
    {"epochs": 0}, {"batch": 0}, {"peak_lr": 0.0}, {"preset": "huge"},
])
def test_run_config_validation(overrides):
    with pytest.raises(ValueError):
        RunConfig(**overrides).validate()


def test_unknown_run_key():
    with pytest.raises(ValueError):
        resolve_config({"run": {"speed": 2}})


def test_read_config_file(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"run": {"epochs": 2}}))
    assert read_config_file(path) == {"run": {"epochs": 2}}

    path.write_text(json.dumps({"training": {}}))
    with pytest.raises(ValueError, match="unknown config sections"):
        read_config_file(path)

    path.write_text("[1, 2]")
    with pytest.raises(ValueError):
        read_config_file(path)

    with pytest.raises(FileNotFoundError):
        read_config_file(tmp_path / "missing.json")


# -------------------------------------------------
# RUNTIME
# -------------------------------------------------
def test_worker_count(monkeypatch):
    monkeypatch.delenv(THREADS_ENV, raising=False)
    assert worker_count() == 1
    assert worker_count(default=3) == 3
    monkeypatch.setenv(THREADS_ENV, "4")
    assert worker_count() == 4


@pytest.mark.parametrize("raw", ["zero", "0", "-2"])
def test_worker_count_rejects_bad_values(monkeypatch, raw):
    monkeypatch.setenv(THREADS_ENV, raw)
    with pytest.raises(ValueError):
        worker_count()


def test_apply_thread_limits_keeps_existing_values(monkeypatch):
    monkeypatch.setenv(THREADS_ENV, "2")
    monkeypatch.setenv("OMP_NUM_THREADS", "8")
    monkeypatch.delenv("MKL_NUM_THREADS", raising=False)
    apply_thread_limits()
    assert os.environ["OMP_NUM_THREADS"] == "8"
    assert os.environ["MKL_NUM_THREADS"] == "2"
