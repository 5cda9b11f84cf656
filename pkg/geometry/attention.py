"""
Intra-manifold attention: self-attention computed in each expert's tangent
space, over the expert vector split into contiguous tokens.
"""

from dataclasses import dataclass

from geometry.base_expert import BaseExpert
from model.layers import multi_head_attention
from model.params import ParamStore
from tensorcore import Tensor, ops


@dataclass
class AttentionConfig:
    heads: int = 4
    temperature: float = 1.0
    tokens: int = 8

    def validate(self, dim: int):
        if self.temperature <= 0:
            raise ValueError(f"attention temperature must be positive, got {self.temperature}")
        if dim % self.tokens:
            raise ValueError(f"{self.tokens} attention tokens do not divide expert width {dim}")
        if (dim // self.tokens) % self.heads:
            raise ValueError(f"{self.heads} heads do not divide token width {dim // self.tokens}")


def intra_manifold_attention(x, expert: BaseExpert, wq: Tensor, wk: Tensor, wv: Tensor,
                             cfg: AttentionConfig) -> Tensor:
    """
    Args:
        x: (B, d_e) points on the expert's manifold
        expert: supplies the tangent maps of its geometry
        wq, wk, wv: (d_e / tokens, d_e / tokens) projections shared across tokens
        cfg: heads, temperature, token count

    Returns:
        (B, d_e) points on the same manifold
    """
    v = expert.to_tangent(x)
    batch, dim = v.shape
    cfg.validate(dim)
    tokens = ops.reshape(v, (batch, cfg.tokens, dim // cfg.tokens))
    attended = multi_head_attention(tokens, wq, wk, wv, cfg.heads, cfg.temperature)
    return expert.from_tangent(ops.reshape(attended, (batch, dim)))


class IntraManifoldAttention:
    """Attention block bound to one expert and its parameter prefix."""

    def __init__(self, store: ParamStore, prefix: str, expert: BaseExpert, cfg: AttentionConfig):
        cfg.validate(expert.dim)
        self.store = store
        self.prefix = prefix
        self.expert = expert
        self.cfg = cfg
        width = expert.dim // cfg.tokens
        store.create(f"{prefix}.wq", (width, width), init="glorot")
        store.create(f"{prefix}.wk", (width, width), init="glorot")
        store.create(f"{prefix}.wv", (width, width), init="identity")

    def forward(self, x) -> Tensor:
        s = self.store
        return intra_manifold_attention(x, self.expert, s[f"{self.prefix}.wq"],
                                        s[f"{self.prefix}.wk"], s[f"{self.prefix}.wv"], self.cfg)
