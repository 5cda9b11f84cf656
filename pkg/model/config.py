"""
Model configuration and the per-clip input record.
"""

from dataclasses import asdict, dataclass, field, fields
from typing import Optional, Tuple

import numpy as np

GEOMETRIES = ("hyperbolic", "spherical", "euclidean")
ROUTING_MODES = ("learned", "uniform", "hard")
POOLING_MODES = ("attention", "mean")
HEAD_MODES = ("adapter", "linear")


@dataclass
class ModelConfig:
    # widths
    d_model: int = 768
    d_e: int = 128
    n_targets: int = 12

    # temporal pipeline / pre-fusion transformer
    use_temporal: bool = True
    temporal_heads: int = 4
    conv_kernel: int = 3
    prefusion_layers: int = 2
    prefusion_heads: int = 4
    ffn_mult: int = 4

    # experts
    curvature: float = 1.0
    expert_layers: int = 2
    expert_dropout: float = 0.1
    hyperbolic_activation: str = "tanh"
    spherical_activation: str = "tanh"
    euclidean_activation: str = "relu"

    # intra-manifold attention
    attn_heads: int = 4
    attn_tokens: int = 8
    attn_temperature: float = 1.0

    # router / head
    router_hidden: int = 64
    head_hidden: int = 512
    adapter_hidden: int = 64

    # ablation switches
    geometry: str = "all"
    routing: str = "learned"
    pooling: str = "attention"
    head: str = "adapter"

    @classmethod
    def desk(cls, **overrides) -> "ModelConfig":
        """Laptop-scale preset."""
        base = dict(d_model=64, d_e=32, head_hidden=64, adapter_hidden=16, router_hidden=32)
        base.update(overrides)
        return cls(**base)

    @classmethod
    def tiny(cls, **overrides) -> "ModelConfig":
        """Smallest preset used by gradient checks."""
        base = dict(d_model=16, d_e=8, temporal_heads=2, prefusion_heads=2, attn_heads=2,
                    attn_tokens=2, router_hidden=8, head_hidden=16, adapter_hidden=4,
                    expert_dropout=0.0)
        base.update(overrides)
        return cls(**base)

    @classmethod
    def from_dict(cls, values: dict, base: Optional["ModelConfig"] = None) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ValueError(f"Unknown model config keys: {unknown}")
        merged = asdict(base or cls())
        merged.update(values)
        return cls(**merged)

    def to_dict(self) -> dict:
        return asdict(self)

    def enabled_geometries(self) -> Tuple[str, ...]:
        if self.geometry == "all":
            return GEOMETRIES
        chosen = tuple(g.strip() for g in self.geometry.split("+") if g.strip())
        bad = [g for g in chosen if g not in GEOMETRIES]
        if bad or not chosen:
            raise ValueError(f"Invalid geometry selection {self.geometry!r}; "
                             f"use 'all' or '+'-joined names from {GEOMETRIES}")
        return tuple(g for g in GEOMETRIES if g in chosen)

    def validate(self):
        for name in ("d_model", "d_e", "n_targets", "expert_layers", "router_hidden",
                     "head_hidden", "adapter_hidden", "attn_tokens", "attn_heads"):
            if getattr(self, name) <= 0:
                raise ValueError(f"ModelConfig.{name} must be positive, got {getattr(self, name)}")
        if self.curvature <= 0:
            raise ValueError(f"ModelConfig.curvature must be positive, got {self.curvature}")
        if self.d_model % 2:
            raise ValueError(f"d_model must be even for the bidirectional LSTM, got {self.d_model}")
        for heads_name in ("temporal_heads", "prefusion_heads"):
            if self.d_model % getattr(self, heads_name):
                raise ValueError(f"{heads_name}={getattr(self, heads_name)} does not divide "
                                 f"d_model={self.d_model}")
        if self.routing not in ROUTING_MODES:
            raise ValueError(f"routing must be one of {ROUTING_MODES}, got {self.routing!r}")
        if self.pooling not in POOLING_MODES:
            raise ValueError(f"pooling must be one of {POOLING_MODES}, got {self.pooling!r}")
        if self.head not in HEAD_MODES:
            raise ValueError(f"head must be one of {HEAD_MODES}, got {self.head!r}")
        self.enabled_geometries()
        return self


@dataclass
class FeatureBundle:
    """Per-clip feature sequences (rows are tokens / frames) and targets."""
    clip_id: str
    text: np.ndarray
    audio: np.ndarray
    video: np.ndarray
    y: Optional[np.ndarray] = None
    user_no: str = ""
    extra: dict = field(default_factory=dict)

    def shape_signature(self) -> tuple:
        return (self.text.shape, self.audio.shape, self.video.shape)

    def check_width(self, d_model: int):
        for modality in ("text", "audio", "video"):
            arr = getattr(self, modality)
            if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] != d_model:
                raise ValueError(f"Clip {self.clip_id}: {modality} features have shape "
                                 f"{arr.shape}, expected (n>=1, {d_model})")
