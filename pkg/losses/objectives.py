"""
Training objectives: Huber, correlation boost, covariance alignment and the
adapter-weight penalty.
"""

from dataclasses import asdict, dataclass, fields
from typing import Iterable, Optional

import numpy as np

from tensorcore import Tensor, as_tensor, ops

LOSS_MODES = ("adaptive", "fixed", "mse")


@dataclass
class LossConfig:
    delta: float = 1.0
    lambda_corr: float = 0.1
    lambda_cov: float = 0.01
    lambda_ent: float = -0.01
    lambda_bal: float = 0.01
    head_reg: float = 1e-4
    winsor_theta: float = 1.5
    winsor_scale: float = 1.5
    ema_decay: float = 0.99
    mix: float = 0.5
    eps: float = 1e-8
    mode: str = "adaptive"

    @classmethod
    def from_dict(cls, values: dict, base: Optional["LossConfig"] = None) -> "LossConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ValueError(f"Unknown loss config keys: {unknown}")
        merged = asdict(base or cls())
        merged.update(values)
        return cls(**merged).validate()

    def to_dict(self) -> dict:
        return asdict(self)

    def validate(self):
        if self.delta <= 0:
            raise ValueError(f"Huber delta must be positive, got {self.delta}")
        if self.winsor_scale <= 0:
            raise ValueError(f"winsorization scale must be positive, got {self.winsor_scale}")
        if not 0.0 <= self.mix <= 1.0:
            raise ValueError(f"balancer mix must lie in [0, 1], got {self.mix}")
        if self.mode not in LOSS_MODES:
            raise ValueError(f"loss mode must be one of {LOSS_MODES}, got {self.mode!r}")
        return self


def huber_loss(y_hat, y, delta: float = 1.0) -> Tensor:
    """Mean Huber loss; quadratic for |e| <= delta, linear beyond."""
    y_hat = as_tensor(y_hat)
    err = y_hat - as_tensor(y)
    abs_err = ops.absolute(err)
    quad = (abs_err.data <= delta).astype(np.float64)
    per_elem = quad * (err * err) * 0.5 + (1.0 - quad) * (abs_err - 0.5 * delta) * delta
    return ops.reduce_mean(per_elem)


def mse_loss(y_hat, y) -> Tensor:
    err = as_tensor(y_hat) - as_tensor(y)
    return ops.reduce_mean(err * err)


def column_pearson(y_hat, y, eps: float = 1e-8) -> Tensor:
    """Per-column Pearson correlation of (B, K) predictions against targets."""
    y_hat = as_tensor(y_hat)
    y = np.asarray(as_tensor(y).data)
    pc = y_hat - ops.reduce_mean(y_hat, axis=0, keepdims=True)
    tc = y - y.mean(axis=0, keepdims=True)
    cov = ops.reduce_mean(pc * tc, axis=0)
    var_p = ops.reduce_mean(pc * pc, axis=0)
    var_t = (tc * tc).mean(axis=0)
    return cov / (ops.sqrt(var_p + eps) * np.sqrt(var_t + eps))


def corr_boost_loss(y_hat, y, lambda_corr: float, eps: float = 1e-8) -> Tensor:
    """λ_corr · (1 - mean_k |pearson_k|)."""
    if as_tensor(y_hat).shape[0] < 2:
        raise ValueError("corr_boost_loss: needs a batch of at least 2 rows")
    r = column_pearson(y_hat, y, eps)
    return (1.0 - ops.reduce_mean(ops.absolute(r))) * lambda_corr


def _covariance(x: Tensor) -> Tensor:
    xc = x - ops.reduce_mean(x, axis=0, keepdims=True)
    return ops.matmul(ops.transpose(xc), xc) * (1.0 / (x.shape[0] - 1))


def cov_align_loss(y_hat, y, lambda_cov: float) -> Tensor:
    """λ_cov · ‖Cov(Ŷ) - Cov(Y)‖_F², unbiased covariances."""
    y_hat = as_tensor(y_hat)
    if y_hat.shape[0] < 2:
        raise ValueError("cov_align_loss: needs a batch of at least 2 rows")
    diff = _covariance(y_hat) - _covariance(as_tensor(y).detach())
    return ops.reduce_sum(diff * diff) * lambda_cov


def head_regularization(adapter_weights: Iterable[Tensor], coefficient: float) -> Tensor:
    """coefficient · Σ squared adapter weights (biases are not passed in)."""
    total = Tensor(0.0)
    for w in adapter_weights:
        total = total + ops.reduce_sum(w * w)
    return total * coefficient
