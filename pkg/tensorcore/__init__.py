# tensorcore package: dense float64 tensors with reverse-mode differentiation
from tensorcore.tensor import (
    Tensor,
    ShapeError,
    NonFiniteError,
    no_grad,
    is_grad_enabled,
    as_tensor,
)
from tensorcore.tape import Tape, backward
