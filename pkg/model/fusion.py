"""
Tangent-space fusion of the expert outputs and the refinement MLP.
"""

from typing import Optional, Sequence

from geometry.manifolds import log0, north_pole, sphere_log
from model.layers import dense, init_dense, init_layer_norm, layer_norm_affine
from model.params import ParamStore
from tensorcore import Tensor, as_tensor, ops


def fuse_tangents(tangents: Sequence[Optional[Tensor]], r) -> Tensor:
    """Σ_i r_i v_i over the experts that produced a tangent vector."""
    r = as_tensor(r)
    fused = None
    for i, v in enumerate(tangents):
        if v is None:
            continue
        term = ops.slice_axis(r, i, i + 1, axis=-1) * v
        fused = term if fused is None else fused + term
    if fused is None:
        raise ValueError("fuse_tangents: no expert outputs to fuse")
    return fused


def tangent_fuse(x_h, x_s, x_e, r, c: float = 1.0, p=None) -> Tensor:
    """r_h log0(x_h) + r_s log_p(x_s) + r_e x_e."""
    x_s = as_tensor(x_s)
    p = north_pole(x_s.shape[-1]) if p is None else p
    return fuse_tangents([log0(x_h, c), sphere_log(p, x_s), as_tensor(x_e)], r)


class Refiner:
    """z + W2 gelu(LN(W1 z + b1)) + b2, hidden width 2·d."""

    def __init__(self, store: ParamStore, prefix: str, dim: int):
        self.store = store
        self.prefix = prefix
        init_dense(store, f"{prefix}.l1", dim, 2 * dim)
        init_layer_norm(store, f"{prefix}.ln", 2 * dim)
        init_dense(store, f"{prefix}.l2", 2 * dim, dim, init="zeros")

    def forward(self, z) -> Tensor:
        return refine(z, self.store, self.prefix)


def refine(z, store: ParamStore, prefix: str = "refiner") -> Tensor:
    z = as_tensor(z)
    hidden = ops.gelu(layer_norm_affine(store, f"{prefix}.ln", dense(store, f"{prefix}.l1", z)))
    return z + dense(store, f"{prefix}.l2", hidden)
