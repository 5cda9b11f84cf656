"""
CRMF Model
==========
temporal_encode -> prefuse -> project_manifolds -> experts -> intra-manifold
attention -> route -> tangent fusion -> refine -> multi-task head.
"""

from collections import OrderedDict
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from geometry.attention import AttentionConfig, IntraManifoldAttention
from geometry.euclidean_expert import EuclideanExpert
from geometry.hyperbolic_expert import HyperbolicExpert
from geometry.manifolds import exp0, project_to_sphere
from geometry.spherical_expert import SphericalExpert
from model.config import GEOMETRIES, FeatureBundle, ModelConfig
from model.fusion import Refiner, fuse_tangents
from model.head import MultiTaskHead
from model.params import ParamStore
from model.prefusion import PreFusion
from model.routing import Router, routing_entropy
from model.temporal import TemporalEncoder
from tensorcore import Tensor, as_tensor, no_grad, ops

EXPERT_CLASSES = {
    "hyperbolic": HyperbolicExpert,
    "spherical": SphericalExpert,
    "euclidean": EuclideanExpert,
}


class StageError(RuntimeError):
    """A forward stage failed; carries the stage name."""

    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"crmf_forward failed at stage '{stage}': {cause}")


def project_manifolds(z, w_h: Optional[Tensor], w_s: Optional[Tensor], w_e: Optional[Tensor],
                      c: float = 1.0) -> Tuple[Optional[Tensor], ...]:
    """x_h = exp0(W_h z), x_s = normalise(W_s z), x_e = W_e z; None for a missing map."""
    z = as_tensor(z)

    def lin(w):
        return ops.matmul(z, ops.transpose(w))

    x_h = exp0(lin(w_h), c) if w_h is not None else None
    x_s = project_to_sphere(lin(w_s)) if w_s is not None else None
    x_e = lin(w_e) if w_e is not None else None
    return x_h, x_s, x_e


class _Stage:
    """Context manager tagging failures with the stage name."""

    def __init__(self, name: str):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and isinstance(exc, (ValueError, FloatingPointError, RuntimeError)) \
                and not isinstance(exc, StageError):
            raise StageError(self.name, exc) from exc
        return False


class CrmfModel:
    """
    Geometric mixture-of-experts regressor.

    Args:
        config: ModelConfig (validated on construction)
        seed: parameter initialisation seed
    """

    def __init__(self, config: ModelConfig, seed: int = 0):
        self.config = config.validate()
        self.store = ParamStore(seed)
        cfg, s = self.config, self.store
        self.geometries = cfg.enabled_geometries()

        self.temporal = (TemporalEncoder(s, "temporal", cfg.d_model, cfg.temporal_heads,
                                         cfg.conv_kernel) if cfg.use_temporal else None)
        self.prefusion = PreFusion(s, "prefusion", cfg.d_model, cfg.prefusion_layers,
                                   cfg.prefusion_heads, cfg.ffn_mult, cfg.pooling)
        attn_cfg = AttentionConfig(cfg.attn_heads, cfg.attn_temperature, cfg.attn_tokens)
        activations = {"hyperbolic": cfg.hyperbolic_activation,
                       "spherical": cfg.spherical_activation,
                       "euclidean": cfg.euclidean_activation}

        self.experts: "OrderedDict[str, object]" = OrderedDict()
        self.attention: "OrderedDict[str, IntraManifoldAttention]" = OrderedDict()
        for geometry in self.geometries:
            s.create(f"projection.{geometry}.w", (cfg.d_e, cfg.d_model))
            expert = EXPERT_CLASSES[geometry](s, f"experts.{geometry}", cfg.d_e,
                                              n_layers=cfg.expert_layers,
                                              dropout=cfg.expert_dropout,
                                              activation=activations[geometry],
                                              curvature=cfg.curvature)
            self.experts[geometry] = expert
            self.attention[geometry] = IntraManifoldAttention(s, f"attention.{geometry}",
                                                              expert, attn_cfg)

        self.router = Router(s, "router", cfg.d_model, cfg.router_hidden, cfg.routing,
                             self.geometries)
        self.refiner = Refiner(s, "refiner", cfg.d_e)
        self.head = MultiTaskHead(s, "head", cfg.d_e, cfg.n_targets, cfg.head_hidden,
                                  cfg.adapter_hidden, cfg.head)

    # -------------------------------------------------
    # STAGES
    # -------------------------------------------------
    def encode_clips(self, bundles: Sequence[FeatureBundle]) -> Tensor:
        """Temporal + pre-fusion per group of equally shaped clips -> (B, d_model)."""
        groups: "OrderedDict[tuple, List[int]]" = OrderedDict()
        for i, b in enumerate(bundles):
            b.check_width(self.config.d_model)
            groups.setdefault(b.shape_signature(), []).append(i)

        pooled, order = [], []
        for indices in groups.values():
            text = np.stack([bundles[i].text for i in indices])
            audio = np.stack([bundles[i].audio for i in indices])
            video = Tensor(np.stack([bundles[i].video for i in indices]))
            with _Stage("temporal_encode"):
                h_video = self.temporal.forward(video) if self.temporal else video
            with _Stage("prefuse"):
                pooled.append(self.prefusion.forward(text, audio, h_video))
            order.extend(indices)

        z = pooled[0] if len(pooled) == 1 else ops.concat(pooled, axis=0)
        if order != sorted(order):
            z = ops.index(z, np.argsort(order))
        return z

    def expert_points(self, z: Tensor, rng: Optional[np.random.Generator] = None
                      ) -> "OrderedDict[str, Tensor]":
        cfg, s = self.config, self.store
        with _Stage("project_manifolds"):
            w = {g: s[f"projection.{g}.w"] if g in self.experts else None for g in GEOMETRIES}
            points = dict(zip(GEOMETRIES, project_manifolds(
                z, w["hyperbolic"], w["spherical"], w["euclidean"], cfg.curvature)))
        out = OrderedDict()
        for geometry, expert in self.experts.items():
            with _Stage(f"{geometry}_expert"):
                x = expert.forward(points[geometry], rng)
            with _Stage(f"{geometry}_attention"):
                out[geometry] = self.attention[geometry].forward(x)
        return out

    # -------------------------------------------------
    # FORWARD
    # -------------------------------------------------
    def forward(self, bundles: Sequence[FeatureBundle],
                rng: Optional[np.random.Generator] = None) -> Tuple[Tensor, Tensor, Dict]:
        """
        Args:
            bundles: clips to predict
            rng: dropout generator; None runs in eval mode

        Returns:
            (predictions (B, K), routing weights (B, 3), diagnostics)
        """
        if not bundles:
            raise ValueError("crmf_forward: empty batch")
        z = self.encode_clips(bundles)
        points = self.expert_points(z, rng)

        tangents = OrderedDict()
        for geometry in GEOMETRIES:
            if geometry in points:
                with _Stage("tangent_fuse"):
                    tangents[geometry] = self.experts[geometry].to_tangent(points[geometry])
        with _Stage("route"):
            r = self.router.forward(z)
        with _Stage("tangent_fuse"):
            fused = fuse_tangents([tangents.get(g) for g in GEOMETRIES], r)
        with _Stage("refine"):
            refined = self.refiner.forward(fused)
        with _Stage("predict_head"):
            y_hat = self.head.forward(refined)

        entropy = routing_entropy(r.data)
        diagnostics = {
            "tangent_norm": {g: float(np.linalg.norm(v.data, axis=-1).mean())
                             for g, v in tangents.items()},
            "routing_mean": {g: float(r.data[:, i].mean()) for i, g in enumerate(GEOMETRIES)},
            "routing_entropy": float(entropy.mean()),
        }
        return y_hat, r, diagnostics

    def predict(self, bundles: Sequence[FeatureBundle], batch_size: int = 16) -> np.ndarray:
        """Eval-mode predictions, (N, K) array."""
        rows = []
        with no_grad():
            for start in range(0, len(bundles), batch_size):
                y_hat, _, _ = self.forward(bundles[start:start + batch_size])
                rows.append(y_hat.data)
        return np.concatenate(rows, axis=0) if rows else np.zeros((0, self.config.n_targets))

    def adapter_weights(self) -> List[Tensor]:
        return self.head.adapter_weights()


def crmf_forward(bundles: Sequence[FeatureBundle], model: CrmfModel,
                 rng: Optional[np.random.Generator] = None):
    return model.forward(bundles, rng)
