"""
Named parameter table.

Names are dotted paths ("experts.hyperbolic.w0"); the first component is the
optimizer group used for per-group learning rates.
"""

from collections import OrderedDict
from typing import Dict, Iterator, Optional, Tuple

import numpy as np

from tensorcore import Tensor


class ParamStore:
    """Ordered name -> Tensor table with seeded initialisers."""

    def __init__(self, seed: int = 0):
        self._params: "OrderedDict[str, Tensor]" = OrderedDict()
        self.rng = np.random.default_rng(seed)

    # -------------------------------------------------
    # CREATION
    # -------------------------------------------------
    def create(self, name: str, shape: Tuple[int, ...], init: str = "glorot",
               scale: float = 1.0) -> Tensor:
        if name in self._params:
            raise ValueError(f"Parameter {name} already exists")
        shape = tuple(int(s) for s in shape)
        if init == "glorot":
            fan_out, fan_in = (shape[-2], shape[-1]) if len(shape) >= 2 else (shape[0], shape[0])
            limit = scale * np.sqrt(6.0 / (fan_in + fan_out))
            data = self.rng.uniform(-limit, limit, size=shape)
        elif init == "normal":
            data = scale * self.rng.standard_normal(shape)
        elif init == "zeros":
            data = np.zeros(shape)
        elif init == "ones":
            data = np.ones(shape)
        elif init == "identity":
            if len(shape) != 2 or shape[0] != shape[1]:
                raise ValueError(f"identity init needs a square shape, got {shape}")
            data = np.eye(shape[0]) + scale * 0.01 * self.rng.standard_normal(shape)
        else:
            raise ValueError(f"Unknown initialiser: {init}")
        t = Tensor(data, requires_grad=True)
        self._params[name] = t
        return t

    # -------------------------------------------------
    # ACCESS
    # -------------------------------------------------
    def __getitem__(self, name: str) -> Tensor:
        try:
            return self._params[name]
        except KeyError:
            raise KeyError(f"No parameter named {name}") from None

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def items(self):
        return self._params.items()

    def named(self, prefix: str = "") -> Dict[str, Tensor]:
        return {k: v for k, v in self._params.items() if k.startswith(prefix)}

    def num_values(self) -> int:
        return int(sum(p.size for p in self._params.values()))

    def zero_grad(self):
        for p in self._params.values():
            p.grad = None

    def state_arrays(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((k, v.data.copy()) for k, v in self._params.items())

    def load_arrays(self, arrays: Dict[str, np.ndarray], strict: bool = True):
        """Copy arrays into existing parameters (shapes must match)."""
        missing = [k for k in self._params if k not in arrays]
        extra = [k for k in arrays if k not in self._params]
        if strict and (missing or extra):
            raise ValueError(f"Parameter table mismatch: missing={missing[:5]} extra={extra[:5]}")
        for name, arr in arrays.items():
            if name not in self._params:
                continue
            p = self._params[name]
            if p.shape != tuple(arr.shape):
                raise ValueError(f"Parameter {name}: stored shape {tuple(arr.shape)} "
                                 f"!= model shape {p.shape}")
            p.data = np.array(arr, dtype=np.float64)

    def get(self, name: str) -> Optional[Tensor]:
        return self._params.get(name)
