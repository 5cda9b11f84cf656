"""
Label Runner
============
Pairwise comparisons -> per-item continuous scores, plus the planted-utility
simulation used to audit recovery.

Output:
  <scores>.json          {"config": ..., "solver": ..., "scores": [{"id", <target names>}]}
  <scores>_issues.csv    malformed comparison lines and flagged items
"""

import json
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from analytics.metrics import spearman
from analytics.report import write_json
from data.metadata_reader import SCORE_KEYS
from labeling.comparisons_reader import read_comparisons, write_comparisons
from labeling.simulate import planted_utilities, simulate_comparisons
from labeling.solver import LAMBDA_GRID, SolverConfig, fit_mnl, select_lambda


def target_names_for(n_targets: int) -> List[str]:
    if n_targets == len(SCORE_KEYS):
        return list(SCORE_KEYS)
    return [f"target_{k}" for k in range(n_targets)]


def recovery_report(theta_hat: np.ndarray, theta_star: np.ndarray) -> Dict:
    """Per-target Spearman between estimated and planted utilities."""
    theta_hat = np.asarray(theta_hat, dtype=np.float64)
    theta_star = np.asarray(theta_star, dtype=np.float64)
    if theta_hat.shape != theta_star.shape:
        raise ValueError(f"Estimated utilities {theta_hat.shape} vs planted {theta_star.shape}")
    per_target = [spearman(theta_hat[:, t], theta_star[:, t]) for t in range(theta_star.shape[1])]
    return {"spearman": per_target, "min_spearman": float(min(per_target)),
            "mean_spearman": float(np.mean(per_target))}


def run_label(comparisons, out_path, n_items: Optional[int] = None,
              n_targets: Optional[int] = None, config: Optional[SolverConfig] = None,
              select: bool = False, grid: Sequence[float] = LAMBDA_GRID, seed: int = 0,
              truth=None, config_echo: Optional[dict] = None, verbose: bool = True) -> Dict:
    """
    Fit utilities from a comparison TSV and write the scores JSON.

    Args:
        comparisons: TSV path
        out_path: scores JSON path
        n_items / n_targets: defaults inferred from the file
        select: choose λ by held-out log-likelihood over `grid` first
        truth: optional planted-utility JSON; adds a recovery report

    Returns:
        summary dict (also embedded in the scores file)
    """
    records, item_ids, issues = read_comparisons(comparisons)
    if not records:
        raise ValueError(f"{comparisons}: no valid comparisons")
    n_items = len(item_ids) if n_items is None else n_items
    if n_items < len(item_ids):
        raise ValueError(f"{comparisons}: {len(item_ids)} items found, N={n_items} given")
    n_targets = max(r.target for r in records) + 1 if n_targets is None else n_targets
    item_ids = item_ids + [str(i) for i in range(len(item_ids), n_items)]
    cfg = config or SolverConfig()

    if verbose:
        print("=" * 70)
        print(f"LABELING {Path(comparisons).name}")
        print("=" * 70)
        print(f"Comparisons: {len(records)} | items: {n_items} | targets: {n_targets}")
        if issues:
            print(f"⚠️  {len(issues)} malformed lines skipped")

    lambda_scores = None
    if select:
        best, lambda_scores = select_lambda(records, n_items, n_targets, grid, seed=seed,
                                            config=cfg)
        cfg = SolverConfig.from_dict({"lam": best}, cfg)
        if verbose:
            print(f"✓ Selected λ = {best:g}")

    fit = fit_mnl(records, n_items, n_targets, cfg, verbose=verbose)
    names = target_names_for(n_targets)
    scores = [{"id": item_ids[i], **{names[t]: float(fit.theta[i, t]) for t in range(n_targets)}}
              for i in range(n_items)]
    for i in fit.flagged_items:
        issues.append({"ITEM": item_ids[i], "TYPE": "WARNING",
                       "MESSAGE": "item in a comparison component of size < 2; score set to 0"})

    summary = {
        "n_items": n_items,
        "n_targets": n_targets,
        "n_comparisons": len(records),
        "iterations": fit.iterations,
        "converged": fit.converged,
        "objective_initial": fit.objective[0],
        "objective_final": fit.objective[-1],
        "loglik": fit.loglik,
        "flagged_items": [item_ids[i] for i in fit.flagged_items],
        "lambda_selection": lambda_scores,
    }
    if truth is not None:
        theta_star = np.asarray(load_truth(truth)["theta"], dtype=np.float64)
        summary["recovery"] = recovery_report(fit.theta, theta_star)

    out_path = Path(out_path)
    write_json(out_path, {"config": {"solver": cfg.to_dict(), **(config_echo or {})},
                          "solver": summary, "target_names": names, "scores": scores})
    if issues:
        issues_file = out_path.with_name(out_path.stem + "_issues.csv")
        pd.DataFrame(issues).to_csv(issues_file, index=False)

    if verbose:
        mark = "✓" if fit.converged else "⚠️ "
        print(f"{mark} {fit.iterations} iterations, objective "
              f"{fit.objective[0]:.6f} → {fit.objective[-1]:.6f}")
        if "recovery" in summary:
            print(f"📈 Recovery Spearman (min over targets): "
                  f"{summary['recovery']['min_spearman']:.4f}")
        print(f"✓ Scores saved → {out_path}")
    return summary


def load_truth(path) -> Dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def run_simulate(out_dir, n_items: int = 60, n_targets: int = 3, pairs_per_item: float = 40,
                 rank: int = 2, scale: float = 1.5, tie_band: float = 0.0, seed: int = 0,
                 verbose: bool = True) -> Dict[str, Path]:
    """
    Write a planted-utility comparison TSV and its ground truth.

    Returns:
        {"comparisons": tsv path, "truth": json path}
    """
    out_dir = Path(out_dir)
    theta_star = planted_utilities(n_items, n_targets, rank, scale, seed)
    records = simulate_comparisons(theta_star, pairs_per_item, seed + 1, tie_band)
    tsv = out_dir / "comparisons.tsv"
    truth = out_dir / "truth.json"
    write_comparisons(tsv, records)
    write_json(truth, {"theta": theta_star, "n_items": n_items, "n_targets": n_targets,
                       "rank": rank, "scale": scale, "pairs_per_item": pairs_per_item,
                       "tie_band": tie_band, "seed": seed})
    if verbose:
        print(f"✓ Simulated {len(records)} comparisons ({n_items} items × {n_targets} targets)")
        print(f"   Comparisons → {tsv}")
        print(f"   Truth       → {truth}")
    return {"comparisons": tsv, "truth": truth}
