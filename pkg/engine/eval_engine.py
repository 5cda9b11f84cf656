"""
Evaluation Engine
=================
Eval-mode predictions from a checkpoint, per-target + macro metrics against
raw targets, deterministic JSON report with the resolved configuration.
"""

from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from analytics.metrics import MetricReport, macro_report
from analytics.report import print_report, save_report
from data.metadata_reader import SCORE_KEYS
from engine.train_engine import targets_of
from model.checkpoint import load_model
from model.config import FeatureBundle, ModelConfig
from model.crmf import CrmfModel
from tensorcore import no_grad
from utils.runtime import worker_count

# model fields that may be changed at evaluation time without new parameters
EVAL_OVERRIDES = ("geometry", "routing")


def ablate(model: CrmfModel, overrides: Optional[Dict[str, str]]) -> CrmfModel:
    """
    Rebuild `model` with a different geometry subset or routing mode, reusing
    its trained parameters.
    """
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    bad = sorted(set(overrides) - set(EVAL_OVERRIDES))
    if bad:
        raise ValueError(f"Evaluation overrides limited to {EVAL_OVERRIDES}, got {bad}")
    if not overrides:
        return model
    config = ModelConfig.from_dict(overrides, base=model.config)
    if config == model.config:
        return model
    ablated = CrmfModel(config)
    trained = model.store.state_arrays()
    missing = [name for name in ablated.store if name not in trained]
    if missing:
        raise ValueError(f"Checkpoint lacks parameters for {overrides}: {missing[:5]}")
    ablated.store.load_arrays({n: trained[n] for n in ablated.store}, strict=True)
    return ablated


def predict_batches(model: CrmfModel, bundles: Sequence[FeatureBundle], batch_size: int = 16,
                    workers: Optional[int] = None) -> np.ndarray:
    """
    Eval-mode predictions; batches run concurrently on the frozen parameters
    and are stitched back in input order.
    """
    bundles = list(bundles)
    if not bundles:
        return np.zeros((0, model.config.n_targets))
    workers = worker_count() if workers is None else workers
    chunks = [bundles[i:i + batch_size] for i in range(0, len(bundles), batch_size)]

    def run(chunk):
        y_hat, _, _ = model.forward(chunk)
        return y_hat.data

    with no_grad():
        if workers <= 1 or len(chunks) == 1:
            rows = [run(c) for c in chunks]
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                rows = list(pool.map(run, chunks))
    return np.concatenate(rows, axis=0)


def evaluate_model(model: CrmfModel, bundles: Sequence[FeatureBundle],
                   target_names: Sequence[str] = SCORE_KEYS, batch_size: int = 16,
                   workers: Optional[int] = None) -> MetricReport:
    y = targets_of(bundles)
    if y.shape[1] != model.config.n_targets:
        raise ValueError(f"Targets have {y.shape[1]} columns, model predicts "
                         f"{model.config.n_targets}")
    for b in bundles:
        b.check_width(model.config.d_model)
    y_hat = predict_batches(model, bundles, batch_size, workers)
    return macro_report(y_hat, y, target_names)


def run_eval(checkpoint, bundles: Sequence[FeatureBundle], split: str, out_path,
             config_echo: Optional[dict] = None, overrides: Optional[Dict[str, str]] = None,
             target_names: Sequence[str] = SCORE_KEYS, batch_size: int = 16,
             verbose: bool = True) -> Tuple[MetricReport, Path]:
    """
    Evaluate a checkpoint on one split and write the report.

    Returns:
        (report, report path)
    """
    model, header, _, _ = load_model(checkpoint)
    model = ablate(model, overrides)
    report = evaluate_model(model, bundles, target_names, batch_size)
    echo = {"checkpoint_config": header.get("config", {}), "evaluated_model": model.config.to_dict(),
            "split": split, "checkpoint": Path(checkpoint).name, "epoch": header.get("epoch")}
    if config_echo:
        echo["run"] = config_echo
    path = save_report(report, out_path, config=echo)
    if verbose:
        print_report(report, title=f"EVALUATION | {split} ({len(bundles)} clips)")
        print(f"✓ Report saved → {path}")
    return report, path
