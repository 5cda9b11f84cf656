"""
Adaptive loss balancing: learned logits mixed with inverse-variance weights
from exponential moving statistics of each component.
"""

from typing import Dict, Mapping, Sequence, Tuple

import numpy as np

from tensorcore import Tensor, ops

COMPONENTS = ("huber", "corr", "cov", "entropy", "balance", "headreg")


class AdaptiveLossBalancer:
    """
    β_i = ω softmax(α)_i + (1 - ω) β_i^adapt, β^adapt ∝ 1/(Var_i + ε).

    EMA statistics are plain arrays (not differentiated) and are updated once
    per optimizer step through `update`. Until two updates have been seen
    the weights are softmax(α) alone.

    Args:
        names: component names, in a fixed order
        decay: EMA decay γ
        mix: ω
        eps: ε
        learn_logits: False freezes α (fixed-weight ablation)
    """

    def __init__(self, names: Sequence[str] = COMPONENTS, decay: float = 0.99,
                 mix: float = 0.5, eps: float = 1e-8, learn_logits: bool = True):
        self.names = tuple(names)
        self.decay = decay
        self.mix = mix
        self.eps = eps
        self.learn_logits = learn_logits
        self.alpha = Tensor(np.zeros(len(self.names)), requires_grad=learn_logits)
        self.mean = np.zeros(len(self.names))
        self.mean_sq = np.zeros(len(self.names))
        self.count = 0

    # -------------------------------------------------
    # WEIGHTS
    # -------------------------------------------------
    def variance(self) -> np.ndarray:
        return np.maximum(self.mean_sq - self.mean ** 2, 0.0)

    def adaptive_weights(self) -> np.ndarray:
        inv = 1.0 / (self.variance() + self.eps)
        return inv / inv.sum()

    def weights(self) -> Tensor:
        soft = ops.softmax(self.alpha)
        if self.count < 2:
            return soft
        return soft * self.mix + self.adaptive_weights() * (1.0 - self.mix)

    def combine(self, losses: Mapping[str, Tensor]) -> Tuple[Tensor, np.ndarray]:
        """Σ β_i ℒ_i over the configured components."""
        missing = [n for n in self.names if n not in losses]
        if missing:
            raise ValueError(f"AdaptiveLossBalancer: missing loss components {missing}")
        beta = self.weights()
        stacked = ops.stack([ops.reshape(losses[n], ()) for n in self.names])
        return ops.reduce_sum(beta * stacked), beta.data.copy()

    # -------------------------------------------------
    # STATE
    # -------------------------------------------------
    def update(self, values: Mapping[str, float]):
        x = np.array([float(values[n]) for n in self.names])
        if not np.isfinite(x).all():
            raise ValueError(f"AdaptiveLossBalancer.update: non-finite component values {x}")
        if self.count == 0:
            self.mean, self.mean_sq = x.copy(), x * x
        else:
            g = self.decay
            self.mean = g * self.mean + (1.0 - g) * x
            self.mean_sq = g * self.mean_sq + (1.0 - g) * x * x
        self.count += 1

    def state_dict(self) -> Dict:
        return {"names": list(self.names), "decay": self.decay, "mix": self.mix,
                "eps": self.eps, "learn_logits": self.learn_logits, "count": self.count,
                "alpha": self.alpha.data.tolist(), "mean": self.mean.tolist(),
                "mean_sq": self.mean_sq.tolist()}

    def load_state_dict(self, state: Dict):
        if list(state["names"]) != list(self.names):
            raise ValueError(f"Balancer components {state['names']} != {list(self.names)}")
        self.decay, self.mix, self.eps = state["decay"], state["mix"], state["eps"]
        self.count = int(state["count"])
        self.alpha.data = np.asarray(state["alpha"], dtype=np.float64)
        self.mean = np.asarray(state["mean"], dtype=np.float64)
        self.mean_sq = np.asarray(state["mean_sq"], dtype=np.float64)


def adaptive_balance(losses: Mapping[str, Tensor], balancer: AdaptiveLossBalancer
                     ) -> Tuple[Tensor, AdaptiveLossBalancer]:
    """Combine the components, then fold their current values into the EMA state."""
    total, _ = balancer.combine(losses)
    balancer.update({n: float(losses[n].data) for n in balancer.names})
    return total, balancer
