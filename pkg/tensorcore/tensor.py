"""
Tensor
======
64-bit dense tensors that record the primitive which produced them.

Every primitive builds its output through `make_result`, which attaches the
parents and a vector-Jacobian closure when any parent requires gradients.
The closure receives the output adjoint and returns one adjoint per parent
(None for parents that do not require gradients).
"""

from contextlib import contextmanager
from typing import Callable, Optional, Sequence, Tuple

import numpy as np


class ShapeError(ValueError):
    """Operand shapes do not conform for a primitive."""

    def __init__(self, primitive: str, shape_a, shape_b, detail: str = ""):
        self.primitive = primitive
        self.shape_a = tuple(shape_a)
        self.shape_b = tuple(shape_b)
        msg = f"{primitive}: incompatible shapes {self.shape_a} and {self.shape_b}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class NonFiniteError(FloatingPointError):
    """A primitive produced NaN or Inf."""

    def __init__(self, primitive: str):
        self.primitive = primitive
        super().__init__(f"{primitive}: produced non-finite values")


# -------------------------------------------------
# GRAD MODE
# -------------------------------------------------
_GRAD_ENABLED = True
_CHECK_FINITE = True


def is_grad_enabled() -> bool:
    return _GRAD_ENABLED


@contextmanager
def no_grad():
    """Disable graph recording inside the block."""
    global _GRAD_ENABLED
    previous = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = previous


def set_finite_checks(enabled: bool):
    global _CHECK_FINITE
    _CHECK_FINITE = enabled


VJP = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]


class Tensor:
    """
    Row-major float64 array with an optional place on the tape.

    Args:
        data: array-like, converted to float64
        requires_grad: mark as a differentiable leaf
    """

    __array_priority__ = 100.0

    def __init__(self, data, requires_grad: bool = False, _parents: Sequence["Tensor"] = (),
                 _vjp: Optional[VJP] = None, _op: str = "leaf"):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self._parents = tuple(_parents)
        self._vjp = _vjp
        self._op = _op

    # -------------------------------------------------
    # BASIC PROPERTIES
    # -------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    @property
    def T(self) -> "Tensor":
        return ops.transpose(self)

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item: tensor of shape {self.shape} is not a scalar")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self._op}{flag})"

    def __len__(self):
        return self.data.shape[0]

    # -------------------------------------------------
    # OPERATORS
    # -------------------------------------------------
    def __add__(self, other):
        return ops.add(self, other)

    def __radd__(self, other):
        return ops.add(other, self)

    def __sub__(self, other):
        return ops.sub(self, other)

    def __rsub__(self, other):
        return ops.sub(other, self)

    def __mul__(self, other):
        return ops.mul(self, other)

    def __rmul__(self, other):
        return ops.mul(other, self)

    def __truediv__(self, other):
        return ops.div(self, other)

    def __rtruediv__(self, other):
        return ops.div(other, self)

    def __neg__(self):
        return ops.neg(self)

    def __pow__(self, exponent: float):
        return ops.power(self, exponent)

    def __matmul__(self, other):
        return ops.matmul(self, other)

    def __rmatmul__(self, other):
        return ops.matmul(other, self)

    def __getitem__(self, index):
        return ops.index(self, index)

    # -------------------------------------------------
    # METHOD SHORTCUTS
    # -------------------------------------------------
    def sum(self, axis=None, keepdims: bool = False):
        return ops.reduce_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return ops.reduce_mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def exp(self):
        return ops.exp(self)

    def log(self):
        return ops.log(self)

    def tanh(self):
        return ops.tanh(self)


def as_tensor(value) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def make_result(data: np.ndarray, parents: Sequence[Tensor], vjp: VJP, op: str) -> Tensor:
    """Wrap a primitive's output, recording it when any parent needs gradients."""
    data = np.asarray(data, dtype=np.float64)
    if _CHECK_FINITE and not np.isfinite(data).all():
        raise NonFiniteError(op)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, _parents=parents, _vjp=vjp, _op=op)
    return Tensor(data, _op=op)


def unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum an adjoint back down to the shape of a broadcast operand."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


from tensorcore import ops  # noqa: E402
