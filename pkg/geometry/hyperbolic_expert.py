from typing import Callable, Optional, Sequence

import numpy as np

from geometry.base_expert import BaseExpert
from geometry.manifolds import exp0, log0, mobius_add, mobius_matvec
from model.layers import dropout as apply_dropout
from tensorcore import Tensor


def hyperbolic_expert(x, weights: Sequence[Tensor], biases: Sequence[Tensor],
                      activation: Callable[[Tensor], Tensor], c: float = 1.0,
                      dropout: float = 0.0, rng: Optional[np.random.Generator] = None) -> Tensor:
    """
    Möbius layers x <- σ_h((W ⊗ x) ⊕ exp0(b)) followed by x_L ⊕ x_0.

    The nonlinearity σ_h and dropout act in the tangent space at the origin.
    """
    h = x
    for w, b in zip(weights, biases):
        h = mobius_add(mobius_matvec(w, h, c), exp0(b, c), c)
        h = exp0(apply_dropout(activation(log0(h, c)), dropout, rng), c)
    return mobius_add(h, x, c)


class HyperbolicExpert(BaseExpert):
    """Expert on the Poincaré ball of curvature c."""

    GEOMETRY = "hyperbolic"
    ACTIVATION = "tanh"

    def to_tangent(self, x) -> Tensor:
        return log0(x, self.curvature)

    def from_tangent(self, v) -> Tensor:
        return exp0(v, self.curvature)

    def forward(self, x, rng=None) -> Tensor:
        return hyperbolic_expert(x, self.weights, self.biases, self.activation,
                                 self.curvature, self.dropout, rng)
