"""
Finite-difference gradient oracle.
"""

from typing import Callable, Dict, Optional

import numpy as np

from tensorcore.tape import backward
from tensorcore.tensor import Tensor, no_grad

DEFAULT_STEP = 1e-5


def _relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    if not (np.isfinite(analytic).all() and np.isfinite(numeric).all()):
        return float("inf")
    err = np.abs(analytic - numeric) / (np.abs(analytic) + np.abs(numeric) + 1e-8)
    return float(err.max()) if err.size else 0.0


def _coordinates(size: int, samples: Optional[int], rng: np.random.Generator) -> np.ndarray:
    if samples is None or samples >= size:
        return np.arange(size)
    return np.sort(rng.choice(size, size=samples, replace=False))


def check_gradients(f: Callable[[Tensor], Tensor], x, h: float = DEFAULT_STEP,
                    samples: Optional[int] = None, seed: int = 0) -> float:
    """
    Max relative error between backward() and central differences.

    Args:
        f: maps a tensor to a scalar tensor
        x: point of evaluation
        h: finite-difference step
        samples: check only this many random coordinates

    Returns:
        max |analytic - numeric| / (|analytic| + |numeric| + 1e-8); inf on NaN
    """
    x0 = np.array(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
    leaf = Tensor(x0.copy(), requires_grad=True)
    analytic = backward(f(leaf), params=[leaf], accumulate=False)[leaf].ravel()

    coords = _coordinates(x0.size, samples, np.random.default_rng(seed))
    numeric = np.empty(len(coords))
    flat = x0.ravel()
    with no_grad():
        for k, i in enumerate(coords):
            plus, minus = flat.copy(), flat.copy()
            plus[i] += h
            minus[i] -= h
            f_plus = f(Tensor(plus.reshape(x0.shape))).item()
            f_minus = f(Tensor(minus.reshape(x0.shape))).item()
            numeric[k] = (f_plus - f_minus) / (2.0 * h)
    return _relative_error(analytic[coords], numeric)


def check_param_gradients(loss_fn: Callable[[], Tensor], params: Dict[str, Tensor],
                          h: float = DEFAULT_STEP, samples_per_param: Optional[int] = 4,
                          seed: int = 0, pick: str = "random") -> Dict[str, float]:
    """
    Same oracle for a loss closed over named parameter tensors.

    Parameters are perturbed in place and restored afterwards. With
    pick="largest" the coordinates with the largest analytic gradient are
    checked instead of random ones; near-zero coordinates only measure
    finite-difference roundoff.

    Returns:
        Mapping parameter name -> max relative error over sampled coordinates
    """
    if pick not in ("random", "largest"):
        raise ValueError(f"pick must be 'random' or 'largest', got {pick!r}")
    rng = np.random.default_rng(seed)
    grads = backward(loss_fn(), params=list(params.values()), accumulate=False)

    errors = {}
    with no_grad():
        for name, p in params.items():
            analytic = grads[p].ravel()
            if pick == "largest" and samples_per_param is not None:
                coords = np.sort(np.argsort(-np.abs(analytic), kind="stable")[:samples_per_param])
            else:
                coords = _coordinates(p.size, samples_per_param, rng)
            original = p.data.copy()
            numeric = np.empty(len(coords))
            try:
                for k, i in enumerate(coords):
                    flat = original.ravel().copy()
                    flat[i] += h
                    p.data = flat.reshape(original.shape)
                    f_plus = loss_fn().item()
                    flat[i] -= 2.0 * h
                    p.data = flat.reshape(original.shape)
                    f_minus = loss_fn().item()
                    numeric[k] = (f_plus - f_minus) / (2.0 * h)
            finally:
                p.data = original
            errors[name] = _relative_error(analytic[coords], numeric)
    return errors
