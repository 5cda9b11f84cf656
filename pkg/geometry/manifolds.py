"""
Manifolds
=========
Poincaré ball (curvature c), unit sphere, and the maps between each and its
tangent space. Every function takes tensors whose last axis is the vector
axis; leading axes are batch axes.
"""

from typing import Callable

import numpy as np

from tensorcore import Tensor, as_tensor
from tensorcore import ops

# radius margin: every ball point satisfies sqrt(c)·‖x‖ <= 1 - BALL_MARGIN
BALL_MARGIN = 1e-5

SPHERE_EPS = 1e-8
CUT_LOCUS_TOL = 1e-6
MOBIUS_DEN_TOL = 1e-12


class CutLocusError(ValueError):
    """Sphere log requested at (or next to) the antipode of its base point."""

    def __init__(self, cosine: float):
        self.cosine = cosine
        super().__init__(f"sphere_log: point within {CUT_LOCUS_TOL} of the antipode "
                         f"(<p, x> = {cosine:.8f})")


def _dot(x: Tensor, y: Tensor) -> Tensor:
    return ops.reduce_sum(x * y, axis=-1, keepdims=True)


def max_ball_radius(c: float = 1.0) -> float:
    return (1.0 - BALL_MARGIN) / np.sqrt(c)


# =================================================
# POINCARÉ BALL
# =================================================

def project_to_ball(x, c: float = 1.0) -> Tensor:
    """Rescale to radius min(‖x‖, (1 - margin)/sqrt(c))."""
    x = as_tensor(x)
    maxr = max_ball_radius(c)
    n = ops.norm(x, axis=-1, keepdims=True)
    return x * (maxr / ops.clamp(n, min_value=maxr))


def exp0(v, c: float = 1.0) -> Tensor:
    """exp_0(v) = tanh(sqrt(c)‖v‖) v / (sqrt(c)‖v‖)."""
    v = as_tensor(v)
    sc = np.sqrt(c)
    n = ops.norm(v, axis=-1, keepdims=True)
    return project_to_ball(ops.tanh_ratio(n * sc) * v, c)


def log0(x, c: float = 1.0) -> Tensor:
    """Inverse of exp0 on the ball."""
    x = as_tensor(x)
    sc = np.sqrt(c)
    n = ops.norm(x, axis=-1, keepdims=True)
    return ops.artanh_ratio(n * sc) * x


def mobius_add(x, y, c: float = 1.0) -> Tensor:
    """Möbius addition x ⊕_c y."""
    x, y = as_tensor(x), as_tensor(y)
    xy = _dot(x, y)
    x2 = _dot(x, x)
    y2 = _dot(y, y)
    den = 1.0 + 2.0 * c * xy + (c * c) * x2 * y2
    if np.any(np.abs(den.data) < MOBIUS_DEN_TOL):
        raise ValueError(f"mobius_add: degenerate denominator "
                         f"(min |den| = {np.abs(den.data).min():.3e})")
    num = (1.0 + 2.0 * c * xy + c * y2) * x + (1.0 - c * x2) * y
    return project_to_ball(num / den, c)


def mobius_matvec(M, x, c: float = 1.0) -> Tensor:
    """M ⊗_c x = exp_0(M log_0(x)); M is (d_out, d_in), x is (..., d_in)."""
    M = as_tensor(M)
    return exp0(ops.matmul(log0(x, c), ops.transpose(M)), c)


def mobius_nonlinearity(x, activation: Callable[[Tensor], Tensor], c: float = 1.0) -> Tensor:
    """Apply an activation in the tangent space at the origin."""
    return exp0(activation(log0(x, c)), c)


# =================================================
# SPHERE
# =================================================

def north_pole(dim: int) -> np.ndarray:
    p = np.zeros(dim)
    p[-1] = 1.0
    return p


def project_to_sphere(x, eps: float = SPHERE_EPS) -> Tensor:
    """x / (‖x‖ + eps), renormalised to unit length."""
    x = as_tensor(x)
    if np.any(np.linalg.norm(x.data, axis=-1) == 0.0):
        raise ValueError("project_to_sphere: cannot normalise a zero vector")
    y = x / (ops.norm(x, axis=-1, keepdims=True) + eps)
    return y / ops.norm(y, axis=-1, keepdims=True)


def tangent_at(p, v) -> Tensor:
    """Remove the component of v along p."""
    p, v = as_tensor(p), as_tensor(v)
    return v - _dot(v, p) * p


def sphere_log(p, x) -> Tensor:
    """log_p(x) = atan2(‖u‖, <p, x>) u / ‖u‖ with u = x - <p, x> p."""
    p, x = as_tensor(p), as_tensor(x)
    a = _dot(p, x)
    if np.any(a.data <= -1.0 + CUT_LOCUS_TOL):
        raise CutLocusError(float(a.data.min()))
    u = x - a * p
    n = ops.norm(u, axis=-1, keepdims=True)
    return ops.atan2_ratio(n, a) * u


def sphere_exp(p, v) -> Tensor:
    """exp_p(v) = cos(‖v‖) p + sin(‖v‖) v / ‖v‖, after projecting v onto T_p."""
    p = as_tensor(p)
    v = tangent_at(p, v)
    n = ops.norm(v, axis=-1, keepdims=True)
    y = ops.cos(n) * p + ops.sin_ratio(n) * v
    return y / ops.norm(y, axis=-1, keepdims=True)


# =================================================
# MEMBERSHIP CHECKS
# =================================================

def ball_violation(x, c: float = 1.0) -> float:
    """Largest excess of sqrt(c)‖x‖ over 1 - margin (<= 0 when inside)."""
    data = as_tensor(x).data
    return float((np.sqrt(c) * np.linalg.norm(data, axis=-1)).max() - (1.0 - BALL_MARGIN))


def sphere_violation(x) -> float:
    """Largest | ‖x‖ - 1 |."""
    data = as_tensor(x).data
    return float(np.abs(np.linalg.norm(data, axis=-1) - 1.0).max())
