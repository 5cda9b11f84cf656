"""
Split assembly for training and evaluation: synthetic benchmark or
metadata + feature containers.
"""

from pathlib import Path
from typing import Dict, List, Optional, Tuple

from data.feature_reader import load_features
from data.metadata_reader import MetadataStore
from data.splits import SPLIT_NAMES, SplitSpec, grouped_split, load_split
from data.synthetic import SyntheticSpec, synth_generate
from model.config import FeatureBundle

Splits = Dict[str, List[FeatureBundle]]


def partition(bundles: List[FeatureBundle], spec: SplitSpec) -> Splits:
    by_id = {b.clip_id: b for b in bundles}
    return {name: [by_id[c] for c in spec.ids(name) if c in by_id] for name in SPLIT_NAMES}


def synthetic_splits(spec: SyntheticSpec, seed: int = 0) -> Tuple[Splits, SplitSpec, dict]:
    """Generate the benchmark and split it by user."""
    bundles, recipe = synth_generate(spec)
    split = grouped_split(bundles, seed=seed)
    return partition(bundles, split), split, recipe


def real_splits(metadata_path, features_root, d_model: int, split_path=None, seed: int = 0,
                issues: Optional[List[Dict]] = None) -> Tuple[Splits, SplitSpec]:
    """
    Join metadata scores with feature containers.

    A saved split file is used when given; otherwise clips are split by user
    under `seed`. Unreadable containers are recorded in `issues` and skipped.
    """
    MetadataStore.load(metadata_path)
    records = MetadataStore.records()
    if not records:
        raise ValueError(f"{metadata_path}: no clips")
    split = load_split(split_path) if split_path else grouped_split(records, seed=seed)
    targets = {r.id: r.score_vector() for r in records}
    users = {r.id: r.user_no for r in records}
    ids = [c for name in SPLIT_NAMES for c in split.ids(name)]
    unknown = [c for c in ids if c not in targets]
    if unknown:
        raise ValueError(f"Split references clips missing from metadata: {unknown[:5]}")
    bundles = load_features(Path(features_root), ids, d_model=d_model, targets=targets,
                            users=users, issues=issues)
    return partition(bundles, split), split
