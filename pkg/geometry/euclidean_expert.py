from typing import Callable, Optional, Sequence

import numpy as np

from geometry.base_expert import BaseExpert
from model.layers import dropout as apply_dropout
from tensorcore import Tensor, as_tensor, ops


def euclidean_expert(x, weights: Sequence[Tensor], biases: Sequence[Tensor],
                     activation: Callable[[Tensor], Tensor] = ops.relu,
                     dropout: float = 0.0, rng: Optional[np.random.Generator] = None) -> Tensor:
    """Feed-forward layers x <- σ(W x + b) with a residual x_L + x_0."""
    x = as_tensor(x)
    h = x
    for w, b in zip(weights, biases):
        h = apply_dropout(activation(ops.matmul(h, ops.transpose(w)) + b), dropout, rng)
    return h + x


class EuclideanExpert(BaseExpert):
    GEOMETRY = "euclidean"
    ACTIVATION = "relu"

    def to_tangent(self, x) -> Tensor:
        return as_tensor(x)

    def from_tangent(self, v) -> Tensor:
        return as_tensor(v)

    def forward(self, x, rng=None) -> Tensor:
        return euclidean_expert(x, self.weights, self.biases, self.activation, self.dropout, rng)
