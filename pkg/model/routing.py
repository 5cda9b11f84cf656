"""
Router over the three geometries and its two regularisers.
"""

from typing import Optional, Sequence

import numpy as np

from model.config import GEOMETRIES
from model.layers import init_dense
from model.params import ParamStore
from tensorcore import Tensor, as_tensor, ops

MASKED_LOGIT = -1e30


def route(z, w1: Tensor, b1: Tensor, w2: Tensor, b2: Tensor,
          enabled: Optional[Sequence[bool]] = None) -> Tensor:
    """r = softmax(W2 gelu(W1 z + b1) + b2); disabled experts get weight 0."""
    hidden = ops.gelu(ops.matmul(z, ops.transpose(w1)) + b1)
    logits = ops.matmul(hidden, ops.transpose(w2)) + b2
    if enabled is not None and not all(enabled):
        logits = logits + np.where(np.asarray(enabled), 0.0, MASKED_LOGIT)
    return ops.softmax(logits)


def uniform_routing(batch: int, enabled: Sequence[bool]) -> Tensor:
    mask = np.asarray(enabled, dtype=np.float64)
    return Tensor(np.tile(mask / mask.sum(), (batch, 1)))


def hard_routing(r: Tensor) -> Tensor:
    """One-hot argmax with a straight-through gradient."""
    one_hot = np.zeros(r.shape)
    one_hot[np.arange(r.shape[0]), r.data.argmax(axis=-1)] = 1.0
    return r - ops.detach(r) + one_hot


def routing_entropy_loss(r, lambda_ent: float) -> Tensor:
    """-λ_ent Σ r log r, averaged over batch rows."""
    r = as_tensor(r)
    plogp = ops.reduce_sum(ops.xlogx(r), axis=-1)
    return ops.reduce_mean(plogp) * (-lambda_ent)


def load_balance_loss(r, lambda_bal: float) -> Tensor:
    """λ_bal times the population variance of the batch-mean expert weights."""
    r = as_tensor(r)
    means = ops.reduce_mean(r, axis=0)
    centred = means - ops.reduce_mean(means)
    return ops.reduce_mean(centred * centred) * lambda_bal


def routing_entropy(r: np.ndarray) -> np.ndarray:
    """Per-row Shannon entropy (nats) of routing weights."""
    r = np.asarray(r)
    safe = np.where(r > 0, r, 1.0)
    return -(np.where(r > 0, r * np.log(safe), 0.0)).sum(axis=-1)


class Router:
    """Lightweight MLP router with the ablation modes."""

    def __init__(self, store: ParamStore, prefix: str, d_in: int, hidden: int,
                 mode: str = "learned", enabled: Sequence[str] = GEOMETRIES):
        self.store = store
        self.prefix = prefix
        self.mode = mode
        self.enabled = [g in enabled for g in GEOMETRIES]
        init_dense(store, f"{prefix}.l1", d_in, hidden)
        init_dense(store, f"{prefix}.l2", hidden, len(GEOMETRIES))

    def forward(self, z) -> Tensor:
        z = as_tensor(z)
        if self.mode == "uniform":
            return uniform_routing(z.shape[0], self.enabled)
        s, p = self.store, self.prefix
        r = route(z, s[f"{p}.l1.w"], s[f"{p}.l1.b"], s[f"{p}.l2.w"], s[f"{p}.l2.b"], self.enabled)
        if self.mode == "hard":
            r = hard_routing(r)
        return r

    def logits_free(self) -> bool:
        """True when the router has no trainable influence on the output."""
        return self.mode == "uniform" or sum(self.enabled) == 1
