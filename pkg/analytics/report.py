"""
Report output: JSON (sorted keys, no timestamps), CSV table and console summary.
"""

import json
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

from analytics.metrics import METRICS, MetricReport


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def write_json(path, payload: dict):
    """Deterministic JSON: sorted keys, fixed indentation, trailing newline."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_plain(payload), fh, indent=2, sort_keys=True, ensure_ascii=False)
        fh.write("\n")


def save_report(report: MetricReport, path, config: Optional[dict] = None,
                extra: Optional[dict] = None) -> Path:
    """Write the report JSON (with a config echo) plus a per-target CSV alongside it."""
    path = Path(path)
    payload = {"report": report.to_dict(), "config": config or {}}
    if extra:
        payload.update(extra)
    write_json(path, payload)
    report.to_frame().round(6).to_csv(path.with_suffix(".csv"), index=False)
    if report.issues:
        pd.DataFrame(report.issues).to_csv(path.with_name(path.stem + "_issues.csv"), index=False)
    return path


def load_report(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def print_report(report: MetricReport, title: str = "EVALUATION"):
    print("\n" + "=" * 70)
    print(title)
    print("=" * 70)
    print(f"Samples: {report.n_samples}")
    width = max(len(t) for t in report.targets + ["MACRO"])
    print(f"{'Target':<{width}}  " + "  ".join(f"{m:>13}" for m in METRICS))
    for t in report.targets:
        row = report.per_target[t]
        print(f"{t:<{width}}  " + "  ".join(f"{row[m]:>13.4f}" for m in METRICS))
    print("-" * 70)
    print(f"{'MACRO':<{width}}  " + "  ".join(f"{report.macro[m]:>13.4f}" for m in METRICS))
    if report.issues:
        print(f"⚠️  {len(report.issues)} metric flags (degenerate columns)")
    print("=" * 70)
