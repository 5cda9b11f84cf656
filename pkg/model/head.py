"""
Multi-task prediction head: shared GELU/LayerNorm stack plus one small
adapter per target, stored as stacked (K, ...) tensors.
"""

from model.layers import dense, init_dense, init_layer_norm, layer_norm_affine
from model.params import ParamStore
from tensorcore import Tensor, as_tensor, ops

ADAPTER_WEIGHTS = ("adapter_w1", "adapter_w2")


def shared_stack(z, store: ParamStore, prefix: str = "head") -> Tensor:
    h = ops.gelu(layer_norm_affine(store, f"{prefix}.ln1", dense(store, f"{prefix}.shared1", z)))
    return ops.gelu(layer_norm_affine(store, f"{prefix}.ln2", dense(store, f"{prefix}.shared2", h)))


def adapters(h, w1: Tensor, b1: Tensor, w2: Tensor, b: Tensor) -> Tensor:
    """
    ŷ_k = w2_k^T gelu(W1_k h + b1_k) + b_k for every target k.

    Args:
        h: (B, s) shared features
        w1: (K, a, s); b1: (K, a); w2: (K, a); b: (K,)

    Returns:
        (B, K) predictions
    """
    h = as_tensor(h)
    k = w1.shape[0]
    # (1, B, s) @ (K, s, a) -> (K, B, a)
    hidden = ops.matmul(ops.reshape(h, (1,) + h.shape), ops.transpose(w1))
    hidden = ops.gelu(hidden + ops.reshape(b1, (k, 1, b1.shape[-1])))
    per_task = ops.reduce_sum(hidden * ops.reshape(w2, (k, 1, w2.shape[-1])), axis=-1)
    return ops.transpose(per_task) + b


def predict_head(z, store: ParamStore, prefix: str = "head", mode: str = "adapter") -> Tensor:
    if mode == "linear":
        return dense(store, f"{prefix}.linear", z)
    s = store
    return adapters(shared_stack(z, s, prefix), s[f"{prefix}.adapter_w1"],
                    s[f"{prefix}.adapter_b1"], s[f"{prefix}.adapter_w2"], s[f"{prefix}.b"])


class MultiTaskHead:

    def __init__(self, store: ParamStore, prefix: str, d_in: int, n_targets: int,
                 hidden: int = 512, adapter_hidden: int = 64, mode: str = "adapter"):
        self.store, self.prefix, self.mode = store, prefix, mode
        if mode == "linear":
            init_dense(store, f"{prefix}.linear", d_in, n_targets)
            return
        init_dense(store, f"{prefix}.shared1", d_in, hidden)
        init_layer_norm(store, f"{prefix}.ln1", hidden)
        init_dense(store, f"{prefix}.shared2", hidden, hidden)
        init_layer_norm(store, f"{prefix}.ln2", hidden)
        store.create(f"{prefix}.adapter_w1", (n_targets, adapter_hidden, hidden))
        store.create(f"{prefix}.adapter_b1", (n_targets, adapter_hidden), init="zeros")
        store.create(f"{prefix}.adapter_w2", (n_targets, adapter_hidden), init="normal",
                     scale=1.0 / adapter_hidden ** 0.5)
        store.create(f"{prefix}.b", (n_targets,), init="zeros")

    def adapter_weights(self):
        return [self.store[f"{self.prefix}.{n}"] for n in ADAPTER_WEIGHTS
                if f"{self.prefix}.{n}" in self.store]

    def forward(self, z) -> Tensor:
        return predict_head(z, self.store, self.prefix, self.mode)
