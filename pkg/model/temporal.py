"""
Temporal modelling of frame features:
BiLSTM -> multi-head self-attention -> depthwise conv1d, summed and projected.
"""

import numpy as np

from model.layers import dense, init_dense, multi_head_attention
from model.params import ParamStore
from tensorcore import Tensor, as_tensor, ops


def _lstm_direction(xw: Tensor, wh: Tensor, hidden: int, reverse: bool) -> Tensor:
    """Run one LSTM direction over precomputed input projections xw: (..., T, 4h)."""
    steps = xw.shape[-2]
    lead = xw.shape[:-2]
    h = Tensor(np.zeros(lead + (hidden,)))
    c = Tensor(np.zeros(lead + (hidden,)))
    outputs = [None] * steps
    order = range(steps - 1, -1, -1) if reverse else range(steps)
    for t in order:
        gates = ops.index(xw, (Ellipsis, t, slice(None))) + ops.matmul(h, ops.transpose(wh))
        i = ops.sigmoid(ops.slice_axis(gates, 0, hidden))
        f = ops.sigmoid(ops.slice_axis(gates, hidden, 2 * hidden))
        g = ops.tanh(ops.slice_axis(gates, 2 * hidden, 3 * hidden))
        o = ops.sigmoid(ops.slice_axis(gates, 3 * hidden, 4 * hidden))
        c = f * c + i * g
        h = o * ops.tanh(c)
        outputs[t] = h
    return ops.stack(outputs, axis=-2)


def bilstm(x, store: ParamStore, prefix: str) -> Tensor:
    """(..., T, d) -> (..., T, d); each direction has d/2 hidden units."""
    x = as_tensor(x)
    halves = []
    for direction, reverse in (("fwd", False), ("bwd", True)):
        p = f"{prefix}.{direction}"
        hidden = store[f"{p}.wh"].shape[-1]
        xw = ops.matmul(x, ops.transpose(store[f"{p}.wx"])) + store[f"{p}.b"]
        halves.append(_lstm_direction(xw, store[f"{p}.wh"], hidden, reverse))
    return ops.concat(halves, axis=-1)


def depthwise_conv1d(x, kernel: Tensor, bias: Tensor) -> Tensor:
    """Per-channel convolution over time with zero same-padding; kernel is (d, k), k odd."""
    x = as_tensor(x)
    width = kernel.shape[-1]
    pad = width // 2
    steps = x.shape[-2]
    zeros = Tensor(np.zeros(x.shape[:-2] + (pad, x.shape[-1])))
    padded = ops.concat([zeros, x, zeros], axis=-2)
    out = bias
    for j in range(width):
        window = ops.slice_axis(padded, j, j + steps, axis=-2)
        out = out + window * ops.index(kernel, (slice(None), j))
    return out


def temporal_encode(frames, store: ParamStore, prefix: str = "temporal", heads: int = 4) -> Tensor:
    """H_v = Proj(F_lstm + F_attn + F_conv)."""
    s = store
    f_lstm = bilstm(frames, s, f"{prefix}.lstm")
    f_attn = multi_head_attention(f_lstm, s[f"{prefix}.attn.wq"], s[f"{prefix}.attn.wk"],
                                  s[f"{prefix}.attn.wv"], heads, wo=s[f"{prefix}.attn.wo"])
    f_conv = depthwise_conv1d(f_attn, s[f"{prefix}.conv.k"], s[f"{prefix}.conv.b"])
    return dense(s, f"{prefix}.proj", f_lstm + f_attn + f_conv)


class TemporalEncoder:

    def __init__(self, store: ParamStore, prefix: str, dim: int, heads: int = 4, kernel: int = 3):
        if kernel % 2 == 0:
            raise ValueError(f"conv kernel must be odd for same-padding, got {kernel}")
        self.store, self.prefix, self.heads = store, prefix, heads
        hidden = dim // 2
        for direction in ("fwd", "bwd"):
            store.create(f"{prefix}.lstm.{direction}.wx", (4 * hidden, dim))
            store.create(f"{prefix}.lstm.{direction}.wh", (4 * hidden, hidden))
            store.create(f"{prefix}.lstm.{direction}.b", (4 * hidden,), init="zeros")
        for name in ("wq", "wk", "wv", "wo"):
            store.create(f"{prefix}.attn.{name}", (dim, dim))
        store.create(f"{prefix}.conv.k", (dim, kernel), init="normal", scale=0.1)
        store.create(f"{prefix}.conv.b", (dim,), init="zeros")
        init_dense(store, f"{prefix}.proj", dim, dim)

    def forward(self, frames) -> Tensor:
        return temporal_encode(frames, self.store, self.prefix, self.heads)
