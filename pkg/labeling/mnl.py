"""
Multinomial-logit likelihood over pairwise records.

A tie becomes two half-weight records, one won by each side; n is the sum of
record weights.
"""

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
from scipy.special import expit

from labeling.comparisons_reader import TIE, WIN_A, ComparisonRecord


def mnl_probability(theta_a, theta_b):
    """P(a preferred over b) = exp(θa)/(exp(θa) + exp(θb)), as logistic(θa - θb)."""
    return expit(np.asarray(theta_a, dtype=np.float64) - np.asarray(theta_b, dtype=np.float64))


@dataclass
class ComparisonArrays:
    """Expanded records: winner-agnostic pairs with outcome y (1 = a won) and weight w."""
    a: np.ndarray
    b: np.ndarray
    t: np.ndarray
    y: np.ndarray
    w: np.ndarray

    @property
    def n(self) -> float:
        return float(self.w.sum())

    def __len__(self):
        return len(self.a)

    def subset(self, mask: np.ndarray) -> "ComparisonArrays":
        return ComparisonArrays(self.a[mask], self.b[mask], self.t[mask], self.y[mask], self.w[mask])


def expand_records(records: Sequence[ComparisonRecord]) -> ComparisonArrays:
    a, b, t, y, w = [], [], [], [], []
    for r in records:
        if r.outcome == TIE:
            a += [r.item_a, r.item_a]
            b += [r.item_b, r.item_b]
            t += [r.target, r.target]
            y += [1.0, 0.0]
            w += [0.5, 0.5]
        else:
            a.append(r.item_a)
            b.append(r.item_b)
            t.append(r.target)
            y.append(1.0 if r.outcome == WIN_A else 0.0)
            w.append(1.0)
    return ComparisonArrays(np.asarray(a, dtype=np.int64), np.asarray(b, dtype=np.int64),
                            np.asarray(t, dtype=np.int64), np.asarray(y), np.asarray(w))


def validate_records(data: ComparisonArrays, n_items: int, n_targets: int):
    if len(data) == 0:
        raise ValueError("No comparison records")
    if data.a.max() >= n_items or data.b.max() >= n_items or min(data.a.min(), data.b.min()) < 0:
        raise ValueError(f"Comparison references an item outside 0..{n_items - 1}")
    if data.t.max() >= n_targets or data.t.min() < 0:
        raise ValueError(f"Comparison references a target outside 0..{n_targets - 1}")


def mnl_loglik(data: ComparisonArrays, theta: np.ndarray) -> float:
    """(1/n) Σ w [y d - log(1 + e^d)], d = θ[a,t] - θ[b,t]."""
    if len(data) == 0:
        raise ValueError("mnl_loglik: empty record set")
    d = theta[data.a, data.t] - theta[data.b, data.t]
    return float((data.w * (data.y * d - np.logaddexp(0.0, d))).sum() / data.n)


def mnl_loglik_and_grad(data: ComparisonArrays, theta: np.ndarray) -> Tuple[float, np.ndarray]:
    """Normalised log-likelihood and its exact gradient with respect to Θ."""
    if len(data) == 0:
        raise ValueError("mnl_loglik_and_grad: empty record set")
    theta = np.asarray(theta, dtype=np.float64)
    d = theta[data.a, data.t] - theta[data.b, data.t]
    value = float((data.w * (data.y * d - np.logaddexp(0.0, d))).sum() / data.n)
    coef = data.w * (data.y - expit(d)) / data.n
    grad = np.zeros_like(theta)
    np.add.at(grad, (data.a, data.t), coef)
    np.add.at(grad, (data.b, data.t), -coef)
    return value, grad
