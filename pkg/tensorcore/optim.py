"""
AdamW with decoupled weight decay and a cosine one-cycle schedule.
"""

import math
import re
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Tuple

import numpy as np

from tensorcore.tensor import Tensor

WARMUP_FRACTION = 0.15
FINAL_DIV = 1e4
BIAS_NAME = re.compile(r"(^|_)b\d*$")


@dataclass
class OptimState:
    """Moments and counters for AdamW plus the schedule it runs under."""
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0
    skipped: int = 0
    weight_decay: float = 0.01
    betas: Tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    peak_lr: float = 1e-3
    warmup_fraction: float = WARMUP_FRACTION
    total_steps: int = 1


def decays(name: str, p: Tensor) -> bool:
    """Rank >= 2 and not a bias (last name component `b`, `b<k>` or `*_b<k>`)."""
    return p.ndim >= 2 and not BIAS_NAME.search(name.rsplit(".", 1)[-1])


def adamw_step(params: Mapping[str, Tensor], grads: Mapping[str, np.ndarray],
               state: OptimState, lr: float,
               lr_scale: Optional[Mapping[str, float]] = None) -> bool:
    """
    One AdamW update, in place on `params`.

    Weight decay is applied only to tensors of rank >= 2 (matrices, stacked
    adapters), never to biases, gains or the loss-balancer logits. Stacked
    biases such as `head.adapter_b1` are recognised by name.

    Returns:
        False when any gradient is non-finite; the step is then skipped and
        `state.skipped` incremented.
    """
    if lr <= 0:
        raise ValueError(f"adamw_step: learning rate must be positive, got {lr}")
    for name, g in grads.items():
        if g.shape != params[name].shape:
            raise ValueError(f"adamw_step: gradient for {name} has shape {g.shape}, "
                             f"parameter has {params[name].shape}")
        if not np.isfinite(g).all():
            state.skipped += 1
            return False

    beta1, beta2 = state.betas
    state.step += 1
    bias1 = 1.0 - beta1 ** state.step
    bias2 = 1.0 - beta2 ** state.step
    for name, g in grads.items():
        p = params[name]
        rate = lr * (lr_scale.get(name, 1.0) if lr_scale else 1.0)
        m = state.m.get(name)
        v = state.v.get(name)
        m = (1.0 - beta1) * g if m is None else beta1 * m + (1.0 - beta1) * g
        v = (1.0 - beta2) * g * g if v is None else beta2 * v + (1.0 - beta2) * g * g
        state.m[name], state.v[name] = m, v

        data = p.data
        if state.weight_decay and decays(name, p):
            data = data - rate * state.weight_decay * data
        p.data = data - rate * (m / bias1) / (np.sqrt(v / bias2) + state.eps)
    return True


def onecycle_lr(step: int, total: int, peak: float,
                warmup_fraction: float = WARMUP_FRACTION, final_div: float = FINAL_DIV) -> float:
    """Cosine warm-up from peak/final_div to peak, then cosine decay back down."""
    floor = peak / final_div
    total = max(int(total), 1)
    step = min(max(step, 0), total)
    warm = warmup_fraction * total
    if step < warm:
        frac = step / warm
        return floor + (peak - floor) * (1.0 - math.cos(math.pi * frac)) / 2.0
    frac = (step - warm) / (total - warm) if total > warm else 1.0
    return floor + (peak - floor) * (1.0 + math.cos(math.pi * frac)) / 2.0


def param_group(name: str) -> str:
    """Group of a parameter name, e.g. 'experts.hyperbolic.w0' -> 'experts'."""
    return name.split(".", 1)[0]


class AdamW:
    """
    Optimizer over a named parameter table with per-group rate multipliers.

    Args:
        params: name -> tensor
        peak_lr: schedule peak
        total_steps: optimizer steps the schedule spans
        group_lr: multiplier per group (first dotted component of the name)
    """

    def __init__(self, params: Mapping[str, Tensor], peak_lr: float = 1e-3,
                 total_steps: int = 1, weight_decay: float = 0.01,
                 group_lr: Optional[Mapping[str, float]] = None):
        self.params = dict(params)
        self.state = OptimState(weight_decay=weight_decay, peak_lr=peak_lr,
                                total_steps=max(int(total_steps), 1))
        self.group_lr = dict(group_lr or {})

    def current_lr(self) -> float:
        s = self.state
        return onecycle_lr(s.step, s.total_steps, s.peak_lr, s.warmup_fraction)

    def step(self, grads: Mapping[str, np.ndarray]) -> bool:
        scale = {name: self.group_lr.get(param_group(name), 1.0) for name in grads}
        return adamw_step(self.params, grads, self.state, self.current_lr(), scale)
