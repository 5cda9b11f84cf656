"""
Evaluation metrics
==================
Per-target rank and pointwise metrics and their macro averages.

Degenerate inputs (zero variance, all ties) give a neutral value and, when an
`issues` list is passed, append a flag record to it instead of returning NaN.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from scipy.stats import rankdata

METRICS = ("spearman", "kendall_tau_b", "c_index", "pearson", "mse")


def _flag(issues: Optional[List[Dict]], metric: str, message: str, target: str = ""):
    if issues is not None:
        issues.append({"METRIC": metric, "TARGET": target, "TYPE": "WARNING", "MESSAGE": message})


def _pair(x, y, metric: str):
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ValueError(f"{metric}: length mismatch {x.size} vs {y.size}")
    if x.size < 2:
        raise ValueError(f"{metric}: needs at least 2 values, got {x.size}")
    return x, y


def pearson(x, y, issues: Optional[List[Dict]] = None, target: str = "") -> float:
    x, y = _pair(x, y, "pearson")
    xc, yc = x - x.mean(), y - y.mean()
    denom = np.sqrt((xc * xc).sum() * (yc * yc).sum())
    if denom == 0.0:
        _flag(issues, "pearson", "zero variance", target)
        return 0.0
    return float(np.clip((xc * yc).sum() / denom, -1.0, 1.0))


def spearman(x, y, issues: Optional[List[Dict]] = None, target: str = "") -> float:
    """Pearson correlation of mid-ranks."""
    x, y = _pair(x, y, "spearman")
    rx, ry = rankdata(x, method="average"), rankdata(y, method="average")
    if np.ptp(rx) == 0 or np.ptp(ry) == 0:
        _flag(issues, "spearman", "zero rank variance", target)
        return 0.0
    return pearson(rx, ry)


def _pair_signs(v: np.ndarray) -> np.ndarray:
    """sign(v_i - v_j) for i < j, flattened."""
    iu = np.triu_indices(v.size, k=1)
    return np.sign(v[:, None] - v[None, :])[iu]


def kendall_tau_b(x, y, issues: Optional[List[Dict]] = None, target: str = "") -> float:
    """(C - D) / sqrt(pairs untied in x · pairs untied in y), over all n(n-1)/2 pairs."""
    x, y = _pair(x, y, "kendall_tau_b")
    sx, sy = _pair_signs(x), _pair_signs(y)
    prod = sx * sy
    concordant = int((prod > 0).sum())
    discordant = int((prod < 0).sum())
    untied_x = int((sx != 0).sum())
    untied_y = int((sy != 0).sum())
    if untied_x == 0 or untied_y == 0:
        _flag(issues, "kendall_tau_b", "all pairs tied", target)
        return 0.0
    return float((concordant - discordant) / np.sqrt(float(untied_x) * float(untied_y)))


def c_index(pred, truth) -> float:
    """
    Concordance over pairs with distinct truth values; prediction ties earn 0.5.

    Raises:
        ValueError: when no pair has distinct truth values
    """
    pred, truth = _pair(pred, truth, "c_index")
    sp, st = _pair_signs(pred), _pair_signs(truth)
    comparable = st != 0
    n_comparable = int(comparable.sum())
    if n_comparable == 0:
        raise ValueError("c_index: no comparable pairs (all truth values tied)")
    agree = sp[comparable] * st[comparable]
    return float(((agree > 0).sum() + 0.5 * (agree == 0).sum()) / n_comparable)


def mse(x, y) -> float:
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ValueError(f"mse: length mismatch {x.size} vs {y.size}")
    return float(np.mean((x - y) ** 2))


@dataclass
class MetricReport:
    targets: List[str]
    per_target: Dict[str, Dict[str, float]]
    macro: Dict[str, float]
    n_samples: int
    issues: List[Dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"targets": list(self.targets), "per_target": self.per_target,
                "macro": self.macro, "n_samples": self.n_samples, "issues": self.issues}

    def to_frame(self) -> pd.DataFrame:
        rows = [{"Target": t, **self.per_target[t]} for t in self.targets]
        rows.append({"Target": "MACRO", **self.macro})
        return pd.DataFrame(rows, columns=["Target", *METRICS])


def macro_report(y_hat, y, names: Optional[Sequence[str]] = None) -> MetricReport:
    """Every metric per target column, then the unweighted mean over targets."""
    y_hat = np.asarray(y_hat, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if y_hat.shape != y.shape or y.ndim != 2:
        raise ValueError(f"macro_report: prediction shape {y_hat.shape} != target shape {y.shape}")
    if y.shape[0] < 2:
        raise ValueError(f"macro_report: needs at least 2 rows, got {y.shape[0]}")
    names = list(names) if names is not None else [f"target_{k}" for k in range(y.shape[1])]
    if len(names) != y.shape[1]:
        raise ValueError(f"macro_report: {len(names)} names for {y.shape[1]} targets")

    issues: List[Dict] = []
    per_target = {}
    for k, name in enumerate(names):
        p, t = y_hat[:, k], y[:, k]
        try:
            ci = c_index(p, t)
        except ValueError as e:
            _flag(issues, "c_index", str(e), name)
            ci = 0.5
        per_target[name] = {
            "spearman": spearman(p, t, issues, name),
            "kendall_tau_b": kendall_tau_b(p, t, issues, name),
            "c_index": ci,
            "pearson": pearson(p, t, issues, name),
            "mse": mse(p, t),
        }
    macro = {m: float(np.mean([per_target[n][m] for n in names])) for m in METRICS}
    return MetricReport(names, per_target, macro, int(y.shape[0]), issues)
