"""
Feature containers
==================
One file per clip:

    8 bytes   magic b"CRMFFEAT"
    4 bytes   header length, uint32 little-endian
    N bytes   UTF-8 JSON header: version, clip_id, endianness, dtype,
              modalities [{name, length, dim}, ...] in payload order
    payload   float32 little-endian, each modality row-major in header order
"""

import json
import struct
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from model.config import FeatureBundle

MAGIC = b"CRMFFEAT"
VERSION = 1
MODALITIES = ("text", "audio", "video")
SUFFIX = ".feat"

# clip path -> (text, audio, video) arrays
_FEATURE_CACHE: Dict[str, tuple] = {}
_CACHE_STATS = {"hits": 0, "misses": 0}


def container_path(root, clip_id: str) -> Path:
    return Path(root) / f"{clip_id}{SUFFIX}"


def write_features(path, bundle: FeatureBundle) -> Path:
    """Write a bundle's feature sequences (as float32) to a container file."""
    path = Path(path)
    if path.is_dir() or path.suffix != SUFFIX:
        path = container_path(path, bundle.clip_id)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = [np.asarray(getattr(bundle, m)) for m in MODALITIES]
    header = {
        "version": VERSION,
        "clip_id": bundle.clip_id,
        "endianness": "little",
        "dtype": "float32",
        "modalities": [{"name": m, "length": int(a.shape[0]), "dim": int(a.shape[1])}
                       for m, a in zip(MODALITIES, arrays)],
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        for a in arrays:
            fh.write(np.ascontiguousarray(a, dtype="<f4").tobytes())
    return path


def read_container(path) -> tuple:
    """Parse one container; returns (header, {modality: float64 array})."""
    raw = Path(path).read_bytes()
    if raw[:len(MAGIC)] != MAGIC:
        raise ValueError(f"{path}: not a feature container (bad magic)")
    if len(raw) < len(MAGIC) + 4:
        raise ValueError(f"{path}: truncated header")
    (header_len,) = struct.unpack("<I", raw[len(MAGIC):len(MAGIC) + 4])
    start = len(MAGIC) + 4
    if len(raw) < start + header_len:
        raise ValueError(f"{path}: truncated header")
    header = json.loads(raw[start:start + header_len].decode("utf-8"))
    if header.get("version") != VERSION:
        raise ValueError(f"{path}: unsupported container version {header.get('version')}")
    if header.get("endianness") != "little" or header.get("dtype") != "float32":
        raise ValueError(f"{path}: unsupported payload encoding")

    payload = raw[start + header_len:]
    declared = sum(m["length"] * m["dim"] for m in header["modalities"]) * 4
    if len(payload) != declared:
        raise ValueError(f"{path}: payload has {len(payload)} bytes, header declares {declared}")

    arrays, offset = {}, 0
    for m in header["modalities"]:
        count = m["length"] * m["dim"]
        values = np.frombuffer(payload, dtype="<f4", count=count, offset=offset)
        arrays[m["name"]] = values.reshape(m["length"], m["dim"]).astype(np.float64)
        offset += count * 4
    missing = [m for m in MODALITIES if m not in arrays]
    if missing:
        raise ValueError(f"{path}: missing modalities {missing}")
    return header, arrays


def load_features(root, clip_ids: Sequence[str], d_model: Optional[int] = None,
                  targets: Optional[Dict[str, np.ndarray]] = None,
                  users: Optional[Dict[str, str]] = None,
                  issues: Optional[List[Dict]] = None) -> List[FeatureBundle]:
    """
    Load containers for `clip_ids` and join targets.

    Args:
        root: directory of <clip_id>.feat files
        d_model: expected feature width; mismatches raise
        targets: clip id -> target vector
        users: clip id -> user number
        issues: when given, unreadable clips are recorded here and skipped
            instead of raising

    Returns:
        FeatureBundles in clip_ids order (skipped clips omitted)
    """
    bundles = []
    for clip_id in clip_ids:
        path = container_path(root, clip_id)
        key = str(path)
        try:
            if key in _FEATURE_CACHE:
                _CACHE_STATS["hits"] += 1
                text, audio, video = _FEATURE_CACHE[key]
            else:
                _CACHE_STATS["misses"] += 1
                if not path.exists():
                    raise FileNotFoundError(f"Feature container not found: {path}")
                header, arrays = read_container(path)
                if header["clip_id"] != clip_id:
                    raise ValueError(f"{path}: header clip id {header['clip_id']!r} != {clip_id!r}")
                text, audio, video = (arrays[m] for m in MODALITIES)
                _FEATURE_CACHE[key] = (text, audio, video)
        except (OSError, ValueError) as e:
            if issues is None:
                raise
            issues.append({"CLIP": clip_id, "TYPE": "ERROR", "STAGE": "load_features",
                           "MESSAGE": str(e)})
            continue

        bundle = FeatureBundle(clip_id=clip_id, text=text, audio=audio, video=video,
                               y=None if targets is None else np.asarray(targets[clip_id]),
                               user_no="" if users is None else users.get(clip_id, ""))
        if d_model is not None:
            bundle.check_width(d_model)
        bundles.append(bundle)
    return bundles


def clear_cache():
    _FEATURE_CACHE.clear()
    _CACHE_STATS["hits"] = 0
    _CACHE_STATS["misses"] = 0


def get_cache_stats() -> dict:
    return {"feature_entries": len(_FEATURE_CACHE), **_CACHE_STATS}
