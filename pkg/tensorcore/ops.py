"""
Primitive operations.

Each function accepts tensors or array-likes, computes its value with numpy,
and hands `make_result` the closure that maps the output adjoint to the
adjoints of its inputs.
"""

from typing import Optional, Sequence

import numpy as np
from scipy.special import erf, expit

from tensorcore.tensor import ShapeError, Tensor, as_tensor, make_result, unbroadcast

# arctanh argument bound
ARCTANH_BOUND = 1.0 - 1e-7

# below this magnitude the guarded ratios switch to their Taylor series
SERIES_EPS = 1e-3

_SQRT_2PI = np.sqrt(2.0 * np.pi)


def _broadcast_shape(primitive: str, a: Tensor, b: Tensor) -> tuple:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(primitive, a.shape, b.shape, "not broadcastable") from None


def _unary(x, value: np.ndarray, dvalue, op: str) -> Tensor:
    """Elementwise primitive whose local derivative is `dvalue` (array)."""
    return make_result(value, (x,), lambda g: (g * dvalue(),), op)


# -------------------------------------------------
# ARITHMETIC
# -------------------------------------------------
def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)

    def vjp(g):
        return unbroadcast(g, a.shape), unbroadcast(g, b.shape)

    return make_result(a.data + b.data, (a, b), vjp, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)

    def vjp(g):
        return unbroadcast(g, a.shape), unbroadcast(-g, b.shape)

    return make_result(a.data - b.data, (a, b), vjp, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)

    def vjp(g):
        return unbroadcast(g * b.data, a.shape), unbroadcast(g * a.data, b.shape)

    return make_result(a.data * b.data, (a, b), vjp, "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("div", a, b)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = a.data / b.data

    def vjp(g):
        return (unbroadcast(g / b.data, a.shape),
                unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return make_result(out, (a, b), vjp, "div")


def neg(a) -> Tensor:
    a = as_tensor(a)
    return make_result(-a.data, (a,), lambda g: (-g,), "neg")


def power(a, exponent: float) -> Tensor:
    a = as_tensor(a)
    p = float(exponent)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = a.data ** p
    return _unary(a, out, lambda: p * a.data ** (p - 1.0), "pow")


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    A, B = a.data, b.data
    if A.ndim == 0 or B.ndim == 0:
        raise ShapeError("matmul", A.shape, B.shape, "scalar operand")
    inner_b = B.shape[0] if B.ndim == 1 else B.shape[-2]
    if A.shape[-1] != inner_b:
        raise ShapeError("matmul", A.shape, B.shape, "inner dimensions differ")
    try:
        out = A @ B
    except ValueError:
        raise ShapeError("matmul", A.shape, B.shape, "batch dimensions") from None

    def vjp(g):
        if A.ndim == 1 and B.ndim == 1:
            return g * B, g * A
        A2 = A[None, :] if A.ndim == 1 else A
        B2 = B[:, None] if B.ndim == 1 else B
        g2 = g
        if A.ndim == 1:
            g2 = np.expand_dims(g2, -2)
        if B.ndim == 1:
            g2 = np.expand_dims(g2, -1)
        gA = g2 @ np.swapaxes(B2, -1, -2)
        gB = np.swapaxes(A2, -1, -2) @ g2
        if A.ndim == 1:
            gA = np.squeeze(gA, -2)
        if B.ndim == 1:
            gB = np.squeeze(gB, -1)
        return unbroadcast(gA, A.shape), unbroadcast(gB, B.shape)

    return make_result(out, (a, b), vjp, "matmul")


# -------------------------------------------------
# ELEMENTWISE FUNCTIONS
# -------------------------------------------------
def exp(x) -> Tensor:
    x = as_tensor(x)
    with np.errstate(over="ignore"):
        out = np.exp(x.data)
    return _unary(x, out, lambda: out, "exp")


def log(x) -> Tensor:
    x = as_tensor(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(x.data)
    return _unary(x, out, lambda: 1.0 / x.data, "log")


def sqrt(x) -> Tensor:
    x = as_tensor(x)
    with np.errstate(invalid="ignore"):
        out = np.sqrt(x.data)
    return _unary(x, out, lambda: 0.5 / out, "sqrt")


def absolute(x) -> Tensor:
    x = as_tensor(x)
    return _unary(x, np.abs(x.data), lambda: np.sign(x.data), "abs")


def tanh(x) -> Tensor:
    x = as_tensor(x)
    out = np.tanh(x.data)
    return _unary(x, out, lambda: 1.0 - out * out, "tanh")


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    out = expit(x.data)
    return _unary(x, out, lambda: out * (1.0 - out), "sigmoid")


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = (x.data > 0).astype(np.float64)
    return _unary(x, x.data * mask, lambda: mask, "relu")


def gelu(x) -> Tensor:
    """Exact GELU, x·Φ(x)."""
    x = as_tensor(x)
    cdf = 0.5 * (1.0 + erf(x.data / np.sqrt(2.0)))
    pdf = np.exp(-0.5 * x.data * x.data) / _SQRT_2PI
    return _unary(x, x.data * cdf, lambda: cdf + x.data * pdf, "gelu")


def sin(x) -> Tensor:
    x = as_tensor(x)
    return _unary(x, np.sin(x.data), lambda: np.cos(x.data), "sin")


def cos(x) -> Tensor:
    x = as_tensor(x)
    return _unary(x, np.cos(x.data), lambda: -np.sin(x.data), "cos")


def atan2(y, x) -> Tensor:
    y, x = as_tensor(y), as_tensor(x)
    _broadcast_shape("atan2", y, x)
    out = np.arctan2(y.data, x.data)

    def vjp(g):
        r2 = y.data * y.data + x.data * x.data
        return unbroadcast(g * x.data / r2, y.shape), unbroadcast(-g * y.data / r2, x.shape)

    return make_result(out, (y, x), vjp, "atan2")


def stable_arctanh(x) -> Tensor:
    """arctanh with the argument clamped to |x| <= 1 - 1e-7."""
    x = as_tensor(x)
    xc = np.clip(x.data, -ARCTANH_BOUND, ARCTANH_BOUND)
    inside = (np.abs(x.data) <= ARCTANH_BOUND).astype(np.float64)
    return _unary(x, np.arctanh(xc), lambda: inside / (1.0 - xc * xc), "stable_arctanh")


def clamp(x, min_value: Optional[float] = None, max_value: Optional[float] = None) -> Tensor:
    x = as_tensor(x)
    lo = -np.inf if min_value is None else min_value
    hi = np.inf if max_value is None else max_value
    mask = ((x.data >= lo) & (x.data <= hi)).astype(np.float64)
    return _unary(x, np.clip(x.data, lo, hi), lambda: mask, "clamp")


def xlogx(x) -> Tensor:
    """x·log(x) with the 0·log(0) = 0 limit."""
    x = as_tensor(x)
    positive = x.data > 0
    safe = np.where(positive, x.data, 1.0)
    out = np.where(positive, x.data * np.log(safe), 0.0)
    return _unary(x, out, lambda: np.where(positive, np.log(safe) + 1.0, 0.0), "xlogx")


# -------------------------------------------------
# GUARDED RATIOS
# -------------------------------------------------
def _series_ratio(z: np.ndarray, direct, ddirect, series, dseries, op: str, x: Tensor) -> Tensor:
    small = np.abs(z) < SERIES_EPS
    zs = np.where(small, 1.0, z)
    value = np.where(small, series(z), direct(zs))

    def local():
        return np.where(small, dseries(z), ddirect(zs))

    return _unary(x, value, local, op)


def tanh_ratio(x) -> Tensor:
    """tanh(z)/z, equal to 1 at z = 0."""
    x = as_tensor(x)
    z = x.data
    return _series_ratio(
        z,
        lambda t: np.tanh(t) / t,
        lambda t: ((1.0 - np.tanh(t) ** 2) * t - np.tanh(t)) / (t * t),
        lambda t: 1.0 - t ** 2 / 3.0 + 2.0 * t ** 4 / 15.0 - 17.0 * t ** 6 / 315.0,
        lambda t: -2.0 * t / 3.0 + 8.0 * t ** 3 / 15.0 - 102.0 * t ** 5 / 315.0,
        "tanh_ratio", x,
    )


def artanh_ratio(x) -> Tensor:
    """arctanh(z)/z with the arctanh argument clamped, equal to 1 at z = 0."""
    x = as_tensor(x)
    z = x.data

    def direct(t):
        return np.arctanh(np.clip(t, -ARCTANH_BOUND, ARCTANH_BOUND)) / t

    def ddirect(t):
        tc = np.clip(t, -ARCTANH_BOUND, ARCTANH_BOUND)
        inside = np.abs(t) <= ARCTANH_BOUND
        return np.where(inside, t / (1.0 - tc * tc), 0.0) / (t * t) - np.arctanh(tc) / (t * t)

    return _series_ratio(
        z, direct, ddirect,
        lambda t: 1.0 + t ** 2 / 3.0 + t ** 4 / 5.0 + t ** 6 / 7.0,
        lambda t: 2.0 * t / 3.0 + 4.0 * t ** 3 / 5.0 + 6.0 * t ** 5 / 7.0,
        "artanh_ratio", x,
    )


def sin_ratio(x) -> Tensor:
    """sin(z)/z, equal to 1 at z = 0."""
    x = as_tensor(x)
    z = x.data
    return _series_ratio(
        z,
        lambda t: np.sin(t) / t,
        lambda t: (t * np.cos(t) - np.sin(t)) / (t * t),
        lambda t: 1.0 - t ** 2 / 6.0 + t ** 4 / 120.0 - t ** 6 / 5040.0,
        lambda t: -t / 3.0 + t ** 3 / 30.0 - t ** 5 / 840.0,
        "sin_ratio", x,
    )


def atan2_ratio(n, a) -> Tensor:
    """atan2(n, a)/n for n >= 0; equal to 1/a as n -> 0 with a > 0."""
    n, a = as_tensor(n), as_tensor(a)
    _broadcast_shape("atan2_ratio", n, a)
    N, A = np.broadcast_arrays(n.data, a.data)
    small = (np.abs(N) < SERIES_EPS * np.abs(A)) & (A > 0)
    Ns = np.where(small, 1.0, N)
    As = np.where(small, 1.0, A)
    u = np.where(small, N / np.where(A > 0, A, 1.0), 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        direct = np.arctan2(Ns, As) / Ns
        series = (1.0 - u ** 2 / 3.0 + u ** 4 / 5.0 - u ** 6 / 7.0) / np.where(small, A, 1.0)
    value = np.where(small, series, direct)

    def vjp(g):
        r2 = N * N + A * A
        with np.errstate(divide="ignore", invalid="ignore"):
            dn_direct = As / (Ns * Ns + As * As) / Ns - np.arctan2(Ns, As) / (Ns * Ns)
            a2 = np.where(small, A * A, 1.0)
            dn_series = (-2.0 * u / 3.0 + 4.0 * u ** 3 / 5.0 - 6.0 * u ** 5 / 7.0) / a2
        dn = np.where(small, dn_series, dn_direct)
        da = -1.0 / r2
        return unbroadcast(g * dn, n.shape), unbroadcast(g * da, a.shape)

    return make_result(value, (n, a), vjp, "atan2_ratio")


# -------------------------------------------------
# NORMALISATION
# -------------------------------------------------
def softmax(x) -> Tensor:
    """Softmax over the last axis."""
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=-1, keepdims=True)

    def vjp(g):
        return (s * (g - (g * s).sum(axis=-1, keepdims=True)),)

    return make_result(s, (x,), vjp, "softmax")


def layer_norm(x, eps: float = 1e-5) -> Tensor:
    """Standardise over the last axis (no affine part)."""
    x = as_tensor(x)
    mu = x.data.mean(axis=-1, keepdims=True)
    centred = x.data - mu
    inv = 1.0 / np.sqrt((centred * centred).mean(axis=-1, keepdims=True) + eps)
    xhat = centred * inv

    def vjp(g):
        gm = g.mean(axis=-1, keepdims=True)
        gx = (g * xhat).mean(axis=-1, keepdims=True)
        return (inv * (g - gm - xhat * gx),)

    return make_result(xhat, (x,), vjp, "layer_norm")


def norm(x, axis: int = -1, keepdims: bool = False) -> Tensor:
    """Euclidean norm along one axis; the gradient at zero is taken as zero."""
    x = as_tensor(x)
    n = np.sqrt((x.data * x.data).sum(axis=axis, keepdims=True))

    def vjp(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        safe = np.where(n > 0, n, 1.0)
        return (g * np.where(n > 0, x.data / safe, 0.0),)

    out = n if keepdims else np.squeeze(n, axis=axis)
    return make_result(out, (x,), vjp, "norm")


# -------------------------------------------------
# REDUCTIONS
# -------------------------------------------------
def _axes(axis, ndim: int) -> tuple:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def reduce_sum(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    axes = _axes(axis, x.ndim)
    out = x.data.sum(axis=axes, keepdims=keepdims)

    def vjp(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, x.shape).copy(),)

    return make_result(out, (x,), vjp, "sum")


def reduce_mean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    axes = _axes(axis, x.ndim)
    count = float(np.prod([x.shape[a] for a in axes])) if axes else 1.0
    return reduce_sum(x, axis=axis, keepdims=keepdims) * (1.0 / count)


# -------------------------------------------------
# SHAPE MANIPULATION
# -------------------------------------------------
def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", x.shape, tuple(np.atleast_1d(shape)), "size mismatch") from None
    return make_result(out, (x,), lambda g: (g.reshape(x.shape),), "reshape")


def transpose(x, axes: Optional[Sequence[int]] = None) -> Tensor:
    """Permute axes; by default swap the last two."""
    x = as_tensor(x)
    if axes is None:
        axes = list(range(x.ndim))
        if x.ndim >= 2:
            axes[-1], axes[-2] = axes[-2], axes[-1]
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return make_result(np.transpose(x.data, axes), (x,),
                       lambda g: (np.transpose(g, inverse),), "transpose")


def index(x, idx) -> Tensor:
    """Basic or advanced indexing (slices included)."""
    x = as_tensor(x)
    out = np.array(x.data[idx], dtype=np.float64)

    def vjp(g):
        full = np.zeros_like(x.data)
        np.add.at(full, idx, g)
        return (full,)

    return make_result(out, (x,), vjp, "index")


def slice_axis(x, start: int, stop: int, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    sl = [slice(None)] * x.ndim
    sl[axis] = slice(start, stop)
    return index(x, tuple(sl))


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ValueError("concat: no tensors given")
    first = tensors[0]
    ax = axis % first.ndim
    for t in tensors[1:]:
        if t.ndim != first.ndim or any(
                t.shape[i] != first.shape[i] for i in range(first.ndim) if i != ax):
            raise ShapeError("concat", first.shape, t.shape, f"axis {axis}")
    sizes = np.cumsum([t.shape[ax] for t in tensors])[:-1]
    out = np.concatenate([t.data for t in tensors], axis=ax)

    def vjp(g):
        return tuple(np.split(g, sizes, axis=ax))

    return make_result(out, tuple(tensors), vjp, "concat")


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ValueError("stack: no tensors given")
    for t in tensors[1:]:
        if t.shape != tensors[0].shape:
            raise ShapeError("stack", tensors[0].shape, t.shape)
    out = np.stack([t.data for t in tensors], axis=axis)

    def vjp(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return make_result(out, tuple(tensors), vjp, "stack")


def detach(x) -> Tensor:
    return Tensor(as_tensor(x).data)
