"""
Pre-fusion: modality embeddings, post-norm transformer encoder layers and
attention pooling to a single clip vector.
"""

from model.layers import (dense, init_dense, init_layer_norm, layer_norm_affine,
                          multi_head_attention)
from model.params import ParamStore
from tensorcore import Tensor, as_tensor, ops

N_MODALITIES = 3


def attention_pool(h, w: Tensor) -> Tensor:
    """z = Σ_i softmax(w^T h_i) h_i over the token axis; h is (..., n, d)."""
    h = as_tensor(h)
    alpha = ops.softmax(ops.matmul(h, w))
    pooled = ops.matmul(ops.reshape(alpha, alpha.shape[:-1] + (1, alpha.shape[-1])), h)
    return ops.reshape(pooled, h.shape[:-2] + (h.shape[-1],))


def mean_pool(h) -> Tensor:
    return ops.reduce_mean(as_tensor(h), axis=-2)


def encoder_layer(h, store: ParamStore, prefix: str, heads: int) -> Tensor:
    s = store
    attended = multi_head_attention(h, s[f"{prefix}.attn.wq"], s[f"{prefix}.attn.wk"],
                                    s[f"{prefix}.attn.wv"], heads, wo=s[f"{prefix}.attn.wo"])
    h = layer_norm_affine(s, f"{prefix}.ln1", h + attended)
    ffn = dense(s, f"{prefix}.ffn2", ops.gelu(dense(s, f"{prefix}.ffn1", h)))
    return layer_norm_affine(s, f"{prefix}.ln2", h + ffn)


def prefuse(h_text, h_audio, h_video, store: ParamStore, prefix: str = "prefusion",
            n_layers: int = 2, heads: int = 4, pooling: str = "attention") -> Tensor:
    """(..., n_t, d), (..., n_a, d), (..., n_v, d) -> (..., d)."""
    emb = store[f"{prefix}.mod_emb"]
    parts = [as_tensor(h) + ops.index(emb, k)
             for k, h in enumerate((h_text, h_audio, h_video))]
    h = ops.concat(parts, axis=-2)
    for layer in range(n_layers):
        h = encoder_layer(h, store, f"{prefix}.layer{layer}", heads)
    if pooling == "mean":
        return mean_pool(h)
    return attention_pool(h, store[f"{prefix}.pool.w"])


class PreFusion:

    def __init__(self, store: ParamStore, prefix: str, dim: int, n_layers: int = 2,
                 heads: int = 4, ffn_mult: int = 4, pooling: str = "attention"):
        self.store, self.prefix = store, prefix
        self.n_layers, self.heads, self.pooling = n_layers, heads, pooling
        store.create(f"{prefix}.mod_emb", (N_MODALITIES, dim), init="normal", scale=0.02)
        for layer in range(n_layers):
            p = f"{prefix}.layer{layer}"
            for name in ("wq", "wk", "wv", "wo"):
                store.create(f"{p}.attn.{name}", (dim, dim))
            init_layer_norm(store, f"{p}.ln1", dim)
            init_dense(store, f"{p}.ffn1", dim, ffn_mult * dim)
            init_dense(store, f"{p}.ffn2", ffn_mult * dim, dim)
            init_layer_norm(store, f"{p}.ln2", dim)
        if pooling == "attention":
            store.create(f"{prefix}.pool.w", (dim,), init="normal", scale=0.02)

    def forward(self, h_text, h_audio, h_video) -> Tensor:
        return prefuse(h_text, h_audio, h_video, self.store, self.prefix,
                       self.n_layers, self.heads, self.pooling)
