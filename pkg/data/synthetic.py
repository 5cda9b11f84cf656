"""
Synthetic Benchmark
===================
Clips whose targets mix three planted signal families, each carried by a
different modality:

  hierarchical  cluster path in a tree     -> text tokens
  directional   unit vector (scale varies) -> audio tokens
  linear        Gaussian latent            -> video frames

Targets are y = [φ_hier, φ_dir, φ_lin] @ C, standardised per column, plus noise.
"""

from dataclasses import asdict, dataclass, field
from typing import List, Tuple

import numpy as np

from model.config import FeatureBundle

FAMILIES = ("hierarchical", "directional", "linear")
FACTORS_PER_FAMILY = 2


@dataclass
class SyntheticSpec:
    seed: int = 0
    n_clips: int = 2000
    n_users: int = 200
    n_targets: int = 12
    d_model: int = 64
    text_len: int = 6
    audio_len: int = 6
    video_len: int = 6
    tree_depth: int = 3
    branching: int = 3
    dir_dim: int = 8
    lin_dim: int = 8
    noise: float = 0.1
    families: Tuple[str, ...] = FAMILIES

    def validate(self):
        bad = [f for f in self.families if f not in FAMILIES]
        if bad or not self.families:
            raise ValueError(f"Unknown synthetic families {bad}; choose from {FAMILIES}")
        if self.n_users < 1 or self.n_clips < 1:
            raise ValueError("Synthetic spec needs at least one clip and one user")
        if self.lin_dim > self.d_model or self.dir_dim > self.d_model:
            raise ValueError("Latent dims must not exceed d_model")
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        d["families"] = list(self.families)
        return d


def _orthonormal_rows(rng: np.random.Generator, rows: int, dim: int) -> np.ndarray:
    q, _ = np.linalg.qr(rng.standard_normal((dim, rows)))
    return q.T


def synth_generate(spec: SyntheticSpec) -> Tuple[List[FeatureBundle], dict]:
    """
    Returns:
        (bundles, recipe) where the recipe holds every matrix needed to
        regenerate the clean targets
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    n, d, f = spec.n_clips, spec.d_model, FACTORS_PER_FAMILY
    active = {fam: fam in spec.families for fam in FAMILIES}

    # hierarchical: one embedding / value per tree node, shrinking with depth
    leaves = rng.integers(0, spec.branching ** spec.tree_depth, size=n)
    node_emb, node_val = [], []
    for level in range(spec.tree_depth):
        n_nodes = spec.branching ** (level + 1)
        node_emb.append(rng.standard_normal((n_nodes, d)) * 0.7 ** level)
        node_val.append(rng.standard_normal((n_nodes, f)) * 0.6 ** level)
    prefixes = [leaves // spec.branching ** (spec.tree_depth - 1 - level)
                for level in range(spec.tree_depth)]
    text_mean = sum(node_emb[l][prefixes[l]] for l in range(spec.tree_depth))
    phi_hier = sum(node_val[l][prefixes[l]] for l in range(spec.tree_depth))

    # directional: only the direction of u reaches the targets
    u = rng.standard_normal((n, spec.dir_dim))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    dir_basis = _orthonormal_rows(rng, spec.dir_dim, d) * np.sqrt(d / spec.dir_dim)
    dir_anchor = rng.standard_normal((spec.dir_dim, f))
    phi_dir = u @ dir_anchor

    # linear: frames are g @ P plus a clip-independent temporal pattern
    g = rng.standard_normal((n, spec.lin_dim))
    lin_proj = _orthonormal_rows(rng, spec.lin_dim, d) * np.sqrt(d / spec.lin_dim)
    lin_weights = rng.standard_normal((spec.lin_dim, f))
    pattern = rng.standard_normal((spec.video_len, d)) * 0.5
    phi_lin = g @ lin_weights

    phi = np.concatenate([
        phi_hier * active["hierarchical"],
        phi_dir * active["directional"],
        phi_lin * active["linear"],
    ], axis=1)
    mixing = rng.standard_normal((len(FAMILIES) * f, spec.n_targets))
    clean = phi @ mixing
    mu = clean.mean(axis=0)
    sd = clean.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    y = (clean - mu) / sd + spec.noise * rng.standard_normal(clean.shape)

    users = rng.integers(0, spec.n_users, size=n)
    bundles = []
    for i in range(n):
        text = text_mean[i] + spec.noise * rng.standard_normal((spec.text_len, d))
        scale = rng.uniform(0.5, 2.0, size=(spec.audio_len, 1))
        audio = scale * (u[i] @ dir_basis) + spec.noise * rng.standard_normal((spec.audio_len, d))
        video = g[i] @ lin_proj + pattern + spec.noise * rng.standard_normal((spec.video_len, d))
        if not active["hierarchical"]:
            text = spec.noise * rng.standard_normal((spec.text_len, d))
        if not active["directional"]:
            audio = spec.noise * rng.standard_normal((spec.audio_len, d))
        bundles.append(FeatureBundle(clip_id=f"syn_{i:05d}", text=text, audio=audio,
                                     video=video, y=y[i].copy(), user_no=f"u{users[i]:04d}"))

    recipe = {
        "spec": spec.to_dict(),
        "mixing": mixing.tolist(),
        "target_mean": mu.tolist(),
        "target_std": sd.tolist(),
        "hier_node_values": [v.tolist() for v in node_val],
        "dir_anchor": dir_anchor.tolist(),
        "lin_weights": lin_weights.tolist(),
        "lin_projection": lin_proj.tolist(),
        "video_pattern": pattern.tolist(),
        "clean_targets_formula": "((phi @ mixing) - target_mean) / target_std",
    }
    return bundles, recipe
