"""
Planted-utility simulation: a random connected pair design judged on every
target by the MNL choice probabilities.
"""

from typing import List, Tuple

import numpy as np
from scipy.special import expit

from labeling.comparisons_reader import TIE, WIN_A, WIN_B, ComparisonRecord


def planted_utilities(n_items: int, n_targets: int, rank: int = 2, scale: float = 1.5,
                      seed: int = 0) -> np.ndarray:
    """Centred low-rank Θ* whose columns have standard deviation `scale`."""
    rng = np.random.default_rng(seed)
    theta = rng.standard_normal((n_items, rank)) @ rng.standard_normal((rank, n_targets))
    theta -= theta.mean(axis=0, keepdims=True)
    std = theta.std(axis=0, keepdims=True)
    return scale * theta / np.where(std > 0, std, 1.0)


def pair_design(n_items: int, pairs_per_item: float, rng: np.random.Generator
                ) -> List[Tuple[int, int]]:
    """A random Hamiltonian cycle plus random extra pairs: ~pairs_per_item pairs per item."""
    if n_items < 2:
        raise ValueError(f"pair_design: need at least 2 items, got {n_items}")
    order = rng.permutation(n_items)
    pairs = [(int(order[i]), int(order[(i + 1) % n_items])) for i in range(n_items)]
    if n_items == 2:
        pairs = pairs[:1]
    extra = int(round(n_items * pairs_per_item / 2.0)) - len(pairs)
    for _ in range(max(extra, 0)):
        a, b = rng.choice(n_items, size=2, replace=False)
        pairs.append((int(a), int(b)))
    return pairs


def simulate_comparisons(theta_star: np.ndarray, pairs_per_item: float, seed: int = 0,
                         tie_band: float = 0.0) -> List[ComparisonRecord]:
    """
    Sample outcomes with P(a wins) = logistic(θa - θb).

    Every pair of the design is judged once per target; pairs whose utility
    gap is below `tie_band` are recorded as ties.
    """
    theta_star = np.asarray(theta_star, dtype=np.float64)
    n_items, n_targets = theta_star.shape
    rng = np.random.default_rng(seed)
    pairs = pair_design(n_items, pairs_per_item, rng)

    records = []
    for a, b in pairs:
        for t in range(n_targets):
            gap = theta_star[a, t] - theta_star[b, t]
            if tie_band > 0 and abs(gap) < tie_band:
                outcome = TIE
            else:
                outcome = WIN_A if rng.random() < expit(gap) else WIN_B
            records.append(ComparisonRecord(a, b, t, outcome))
    return records
