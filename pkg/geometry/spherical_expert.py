from typing import Callable, Optional, Sequence

import numpy as np

from geometry.base_expert import BaseExpert
from geometry.manifolds import north_pole, sphere_exp, sphere_log, tangent_at
from model.layers import dropout as apply_dropout
from tensorcore import Tensor, ops


def spherical_expert(x, weights: Sequence[Tensor], biases: Sequence[Tensor],
                     activation: Callable[[Tensor], Tensor], p=None,
                     dropout: float = 0.0, rng: Optional[np.random.Generator] = None) -> Tensor:
    """
    Tangent-space layers at the base point p (north pole by default):
    v0 = log_p(x); v <- Proj_p(σ(W v + b)); return exp_p(v_L + v0).
    """
    if p is None:
        p = north_pole(x.shape[-1])
    v0 = sphere_log(p, x)
    v = v0
    for w, b in zip(weights, biases):
        v = activation(ops.matmul(v, ops.transpose(w)) + b)
        v = apply_dropout(tangent_at(p, v), dropout, rng)
    return sphere_exp(p, v + v0)


class SphericalExpert(BaseExpert):
    """Expert on the unit sphere, base point at the north pole."""

    GEOMETRY = "spherical"
    ACTIVATION = "tanh"

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.base_point = north_pole(self.dim)

    def to_tangent(self, x) -> Tensor:
        return sphere_log(self.base_point, x)

    def from_tangent(self, v) -> Tensor:
        return sphere_exp(self.base_point, tangent_at(self.base_point, v))

    def forward(self, x, rng=None) -> Tensor:
        return spherical_expert(x, self.weights, self.biases, self.activation,
                                self.base_point, self.dropout, rng)
