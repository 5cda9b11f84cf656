"""
Run configuration: script defaults, optional JSON file, command-line overrides.

A config file may hold the sections "model", "loss", "solver" and "run".
Flags win over the file, the file wins over defaults.
"""

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Optional

from labeling.solver import SolverConfig
from losses.objectives import LossConfig
from model.config import ModelConfig

PRESETS = ("desk", "tiny", "full")
SECTIONS = ("model", "loss", "solver", "run")


@dataclass
class RunConfig:
    seed: int = 0
    epochs: int = 30
    batch: int = 4
    accum: int = 8
    patience: int = 5
    peak_lr: float = 1e-3
    weight_decay: float = 0.01
    preset: str = "desk"
    out: str = "output"
    synthetic_clips: int = 2000
    synthetic_users: int = 200
    synthetic_noise: float = 0.1

    @property
    def effective_batch(self) -> int:
        return self.batch * self.accum

    def validate(self):
        for name in ("epochs", "batch", "accum", "patience"):
            if getattr(self, name) < 1:
                raise ValueError(f"RunConfig.{name} must be >= 1, got {getattr(self, name)}")
        if self.peak_lr <= 0:
            raise ValueError(f"RunConfig.peak_lr must be positive, got {self.peak_lr}")
        if self.preset not in PRESETS:
            raise ValueError(f"preset must be one of {PRESETS}, got {self.preset!r}")
        return self

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ResolvedConfig:
    run: RunConfig
    model: ModelConfig
    loss: LossConfig
    solver: SolverConfig

    def to_dict(self) -> dict:
        return {"run": self.run.to_dict(), "model": self.model.to_dict(),
                "loss": self.loss.to_dict(), "solver": self.solver.to_dict()}


def base_model(preset: str) -> ModelConfig:
    if preset == "desk":
        return ModelConfig.desk()
    if preset == "tiny":
        return ModelConfig.tiny()
    return ModelConfig()


def read_config_file(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Config file not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    unknown = sorted(set(data) - set(SECTIONS))
    if unknown:
        raise ValueError(f"{path}: unknown config sections {unknown}; expected {SECTIONS}")
    return data


def resolve_config(file_values: Optional[dict] = None, run_overrides: Optional[dict] = None,
                   model_overrides: Optional[dict] = None, loss_overrides: Optional[dict] = None,
                   solver_overrides: Optional[dict] = None) -> ResolvedConfig:
    """
    Merge defaults, file sections and flag overrides (None values are ignored).
    """
    file_values = file_values or {}

    def pick(d):
        return {k: v for k, v in (d or {}).items() if v is not None}

    run_values = {**file_values.get("run", {}), **pick(run_overrides)}
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(run_values) - known)
    if unknown:
        raise ValueError(f"Unknown run config keys: {unknown}")
    run = RunConfig(**run_values).validate()

    model = ModelConfig.from_dict({**file_values.get("model", {}), **pick(model_overrides)},
                                  base=base_model(run.preset)).validate()
    loss = LossConfig.from_dict({**file_values.get("loss", {}), **pick(loss_overrides)})
    solver = SolverConfig.from_dict({**file_values.get("solver", {}), **pick(solver_overrides)})
    return ResolvedConfig(run=run, model=model, loss=loss, solver=solver)
