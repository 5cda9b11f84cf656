"""
Epoch Tracker
=============
Per-step training telemetry: every loss component, balancer weights, routing
statistics and the learning rate; plus one summary row per epoch.

Output:
  <out>/history/<run_name>_steps.csv
  <out>/history/<run_name>_epochs.csv
  <out>/history/<run_name>_issues.csv
"""

from pathlib import Path
from typing import Dict, Mapping, Optional

import numpy as np
import pandas as pd


class EpochTracker:

    def __init__(self, run_name: str, output_dir: Path):
        """
        run_name: used for the CSV names, e.g. crmf_all_learned_seed0
        """
        self.run_name = run_name
        self.output_dir = Path(output_dir) / "history"
        self.output_dir.mkdir(parents=True, exist_ok=True)
        self.step_rows = []
        self.epoch_rows = []
        self.issue_rows = []
        self._epoch = 0

    def new_epoch(self, epoch: int):
        self._epoch = epoch

    def record_step(self, step: int, lr: float, components: Mapping[str, float],
                    beta: Optional[Mapping[str, float]], diagnostics: Dict, total: float):
        row = {"Epoch": self._epoch, "Step": step, "LR": lr, "Loss": round(total, 10)}
        for name, value in components.items():
            row[f"loss_{name}"] = value
        for name, value in (beta or {}).items():
            row[f"beta_{name}"] = value
        for geometry, value in diagnostics.get("routing_mean", {}).items():
            row[f"route_{geometry}"] = value
        row["route_entropy"] = diagnostics.get("routing_entropy", np.nan)
        for geometry, value in diagnostics.get("tangent_norm", {}).items():
            row[f"tangent_{geometry}"] = value
        self.step_rows.append(row)

    def record_epoch(self, train_loss: float, val_spearman: float, best: float,
                     patience_left: int, skipped: int):
        self.epoch_rows.append({
            "Epoch": self._epoch,
            "TrainLoss": train_loss,
            "ValSpearman": val_spearman,
            "BestSpearman": best,
            "PatienceLeft": patience_left,
            "SkippedSteps": skipped,
        })

    def add_issue(self, stage: str, kind: str, message: str, **context):
        self.issue_rows.append({"EPOCH": self._epoch, "STAGE": stage, "TYPE": kind,
                                "MESSAGE": message, **context})

    def last_step(self) -> Optional[dict]:
        return self.step_rows[-1] if self.step_rows else None

    def save(self):
        files = {
            "steps": (self.step_rows, self.output_dir / f"{self.run_name}_steps.csv"),
            "epochs": (self.epoch_rows, self.output_dir / f"{self.run_name}_epochs.csv"),
            "issues": (self.issue_rows, self.output_dir / f"{self.run_name}_issues.csv"),
        }
        for kind, (rows, path) in files.items():
            if not rows:
                continue
            new_df = pd.DataFrame(rows)
            if path.exists():
                existing = pd.read_csv(path)
                new_df = pd.concat([existing, new_df], ignore_index=True)
            new_df.to_csv(path, index=False)
            glyph = "⚠️ " if kind == "issues" else "📈"
            print(f"  {glyph} {kind.capitalize():<7} saved → {path}  ({len(rows)} rows)")

        self.step_rows = []
        self.epoch_rows = []
        self.issue_rows = []
