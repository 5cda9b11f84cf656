"""
Shared building blocks: dense maps, affine layer norm, dropout and
multi-head self-attention over (..., n, d) sequences.
"""

from typing import Callable, Dict, Optional

import numpy as np

from model.params import ParamStore
from tensorcore import Tensor, as_tensor
from tensorcore import ops

ACTIVATIONS: Dict[str, Callable[[Tensor], Tensor]] = {
    "tanh": ops.tanh,
    "relu": ops.relu,
    "gelu": ops.gelu,
    "identity": lambda x: x,
}


def get_activation(name: str) -> Callable[[Tensor], Tensor]:
    if name not in ACTIVATIONS:
        raise ValueError(f"Unknown activation {name!r}; expected one of {sorted(ACTIVATIONS)}")
    return ACTIVATIONS[name]


# -------------------------------------------------
# DENSE
# -------------------------------------------------
def init_dense(store: ParamStore, prefix: str, d_in: int, d_out: int,
               bias: bool = True, init: str = "glorot"):
    store.create(f"{prefix}.w", (d_out, d_in), init=init)
    if bias:
        store.create(f"{prefix}.b", (d_out,), init="zeros")


def dense(store: ParamStore, prefix: str, x) -> Tensor:
    """x @ W^T + b for W of shape (d_out, d_in)."""
    out = ops.matmul(x, ops.transpose(store[f"{prefix}.w"]))
    if f"{prefix}.b" in store:
        out = out + store[f"{prefix}.b"]
    return out


# -------------------------------------------------
# NORMALISATION / REGULARISATION
# -------------------------------------------------
def init_layer_norm(store: ParamStore, prefix: str, dim: int):
    store.create(f"{prefix}.g", (dim,), init="ones")
    store.create(f"{prefix}.b", (dim,), init="zeros")


def layer_norm_affine(store: ParamStore, prefix: str, x, eps: float = 1e-5) -> Tensor:
    return ops.layer_norm(x, eps) * store[f"{prefix}.g"] + store[f"{prefix}.b"]


def dropout(x, rate: float, rng: Optional[np.random.Generator]) -> Tensor:
    """Inverted dropout; identity when rng is None (eval mode) or rate is 0."""
    x = as_tensor(x)
    if rng is None or rate <= 0.0:
        return x
    keep = (rng.random(x.shape) >= rate).astype(np.float64) / (1.0 - rate)
    return x * keep


# -------------------------------------------------
# ATTENTION
# -------------------------------------------------
def _split_heads(x: Tensor, heads: int) -> Tensor:
    """(..., n, d) -> (..., heads, n, d/heads)."""
    *lead, n, d = x.shape
    x = ops.reshape(x, tuple(lead) + (n, heads, d // heads))
    axes = list(range(x.ndim))
    axes[-3], axes[-2] = axes[-2], axes[-3]
    return ops.transpose(x, axes)


def _merge_heads(x: Tensor) -> Tensor:
    """(..., heads, n, dh) -> (..., n, heads*dh)."""
    axes = list(range(x.ndim))
    axes[-3], axes[-2] = axes[-2], axes[-3]
    x = ops.transpose(x, axes)
    *lead, n, h, dh = x.shape
    return ops.reshape(x, tuple(lead) + (n, h * dh))


def attention_weights(q: Tensor, k: Tensor, heads: int, temperature: float = 1.0) -> Tensor:
    dh = q.shape[-1] // heads
    scores = ops.matmul(_split_heads(q, heads), ops.transpose(_split_heads(k, heads)))
    return ops.softmax(scores * (1.0 / (temperature * np.sqrt(dh))))


def multi_head_attention(x, wq: Tensor, wk: Tensor, wv: Tensor, heads: int,
                         temperature: float = 1.0, wo: Optional[Tensor] = None) -> Tensor:
    """
    Self-attention over the second-to-last axis.

    Args:
        x: (..., n, d) tokens
        wq, wk, wv: (d, d) projections
        heads: number of heads, must divide d
        temperature: logits are divided by temperature * sqrt(d / heads)
        wo: optional (d, d) output projection

    Returns:
        (..., n, d) attended tokens
    """
    x = as_tensor(x)
    d = x.shape[-1]
    if d % heads:
        raise ValueError(f"multi_head_attention: {heads} heads do not divide width {d}")
    q = ops.matmul(x, ops.transpose(wq))
    k = ops.matmul(x, ops.transpose(wk))
    v = ops.matmul(x, ops.transpose(wv))
    weights = attention_weights(q, k, heads, temperature)
    out = _merge_heads(ops.matmul(weights, _split_heads(v, heads)))
    if wo is not None:
        out = ops.matmul(out, ops.transpose(wo))
    return out
