from abc import ABC, abstractmethod
from typing import List, Optional

import numpy as np

from model.layers import get_activation
from model.params import ParamStore
from tensorcore import Tensor


class BaseExpert(ABC):
    """
    Base class for the geometry experts.

    To add a geometry:
    1. Inherit from this class
    2. Set GEOMETRY and ACTIVATION
    3. Implement to_tangent() / from_tangent() (used by intra-manifold attention and fusion)
    4. Implement forward()
    """

    GEOMETRY = "base"
    ACTIVATION = "tanh"
    N_LAYERS = 2
    DROPOUT = 0.1

    def __init__(self, store: ParamStore, prefix: str, dim: int,
                 n_layers: Optional[int] = None, dropout: Optional[float] = None,
                 activation: Optional[str] = None, curvature: float = 1.0):
        self.store = store
        self.prefix = prefix
        self.dim = dim
        self.n_layers = self.N_LAYERS if n_layers is None else n_layers
        self.dropout = self.DROPOUT if dropout is None else dropout
        self.activation_name = activation or self.ACTIVATION
        self.activation = get_activation(self.activation_name)
        self.curvature = curvature
        if self.n_layers < 1:
            raise ValueError(f"{self.name}: needs at least one layer, got {self.n_layers}")
        for layer in range(self.n_layers):
            store.create(f"{prefix}.w{layer}", (dim, dim), init="glorot", scale=0.5)
            store.create(f"{prefix}.b{layer}", (dim,), init="zeros")

    @property
    def name(self) -> str:
        return self.__class__.__name__

    @property
    def weights(self) -> List[Tensor]:
        return [self.store[f"{self.prefix}.w{i}"] for i in range(self.n_layers)]

    @property
    def biases(self) -> List[Tensor]:
        return [self.store[f"{self.prefix}.b{i}"] for i in range(self.n_layers)]

    @abstractmethod
    def to_tangent(self, x) -> Tensor:
        """Map a manifold point to its tangent vector."""

    @abstractmethod
    def from_tangent(self, v) -> Tensor:
        """Map a tangent vector back onto the manifold."""

    @abstractmethod
    def forward(self, x, rng: Optional[np.random.Generator] = None) -> Tensor:
        """
        Run the expert on a batch of manifold points.

        Args:
            x: (B, dim) points on this expert's manifold
            rng: dropout generator; None in eval mode

        Returns:
            (B, dim) points on the same manifold
        """
