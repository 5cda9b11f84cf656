"""
Soft winsorization of training targets and per-target statistics.
"""

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import pandas as pd

THETA = 1.5
SCALE = 1.5


def soft_winsorize(x, theta: float = THETA, s: float = SCALE) -> np.ndarray:
    """x inside ±theta, sign(x)(theta + s·tanh((|x| - theta)/s)) outside."""
    x = np.asarray(x, dtype=np.float64)
    over = np.abs(x) > theta
    compressed = np.sign(x) * (theta + s * np.tanh((np.abs(x) - theta) / s))
    return np.where(over, compressed, x)


@dataclass
class TargetStatistics:
    """Training-split statistics per target column."""
    names: Sequence[str]
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, Y: np.ndarray, names: Sequence[str]) -> "TargetStatistics":
        Y = np.asarray(Y, dtype=np.float64)
        if Y.ndim != 2 or Y.shape[1] != len(names):
            raise ValueError(f"Target matrix shape {Y.shape} does not match {len(names)} names")
        std = Y.std(axis=0)
        return cls(list(names), Y.mean(axis=0), np.where(std > 0, std, 1.0))

    def to_dict(self) -> dict:
        return {"names": list(self.names), "mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "TargetStatistics":
        return cls(list(d["names"]), np.asarray(d["mean"], dtype=np.float64),
                   np.asarray(d["std"], dtype=np.float64))


def winsorize_targets(Y, stats: TargetStatistics, theta: float = THETA,
                      s: float = SCALE) -> np.ndarray:
    """Standardise with train-split statistics, soft-clip in σ-units, de-standardise."""
    Y = np.asarray(Y, dtype=np.float64)
    z = (Y - stats.mean) / stats.std
    return soft_winsorize(z, theta, s) * stats.std + stats.mean


def describe_targets(Y, names: Sequence[str]) -> pd.DataFrame:
    """Mean, std, range, skewness and excess kurtosis per target."""
    df = pd.DataFrame(np.asarray(Y, dtype=np.float64), columns=list(names))
    table = pd.DataFrame({
        "Target": list(names),
        "Mean": df.mean().values,
        "Std": df.std(ddof=0).values,
        "Min": df.min().values,
        "Max": df.max().values,
        "Skewness": df.skew().values,
        "Kurtosis": df.kurt().values,
    })
    return table.round(4)
