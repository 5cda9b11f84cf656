"""
Checkpoints
===========
Single file:

    8 bytes   magic b"CRMFCKPT"
    4 bytes   format version, uint32 little-endian
    8 bytes   header length, uint64 little-endian
    N bytes   UTF-8 JSON header: model config, tensor table [{name, shape}],
              plus any JSON-able training state (balancer, optimizer counters,
              generator states, epoch/best/patience, target statistics)
    payload   float64 little-endian, tensors row-major in table order

Optimizer moments are stored as tensors named "optim.m/<param>" and
"optim.v/<param>".
"""

import json
import struct
from collections import OrderedDict
from pathlib import Path
from typing import Dict, Mapping, Optional, Tuple

import numpy as np

MAGIC = b"CRMFCKPT"
VERSION = 1
MOMENT_PREFIXES = ("optim.m/", "optim.v/")


def save_checkpoint(path, tensors: Mapping[str, np.ndarray], header: Optional[dict] = None) -> Path:
    """
    Args:
        path: output file
        tensors: name -> array, written in iteration order
        header: extra JSON-able entries (must not use the key "tensors")
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = dict(header or {})
    if "tensors" in header:
        raise ValueError("checkpoint header key 'tensors' is reserved")
    arrays = [(name, np.ascontiguousarray(arr, dtype="<f8")) for name, arr in tensors.items()]
    for name, arr in arrays:
        if not np.isfinite(arr).all():
            raise ValueError(f"save_checkpoint: tensor {name} holds non-finite values")
    header["version"] = VERSION
    header["endianness"] = "little"
    header["dtype"] = "float64"
    header["tensors"] = [{"name": name, "shape": list(arr.shape)} for name, arr in arrays]
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")

    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<Q", len(header_bytes)))
        fh.write(header_bytes)
        for _, arr in arrays:
            fh.write(arr.tobytes())
    tmp.replace(path)
    return path


def load_checkpoint(path) -> Tuple[dict, "OrderedDict[str, np.ndarray]"]:
    """Returns (header, name -> float64 array)."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Checkpoint not found: {path}")
    raw = path.read_bytes()
    fixed = len(MAGIC) + 4 + 8
    if raw[:len(MAGIC)] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint (bad magic)")
    if len(raw) < fixed:
        raise ValueError(f"{path}: truncated header")
    (version,) = struct.unpack("<I", raw[len(MAGIC):len(MAGIC) + 4])
    if version != VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    (header_len,) = struct.unpack("<Q", raw[len(MAGIC) + 4:fixed])
    if len(raw) < fixed + header_len:
        raise ValueError(f"{path}: truncated header")
    header = json.loads(raw[fixed:fixed + header_len].decode("utf-8"))

    payload = raw[fixed + header_len:]
    sizes = [int(np.prod(t["shape"], dtype=np.int64)) for t in header["tensors"]]
    declared = sum(sizes) * 8
    if len(payload) != declared:
        raise ValueError(f"{path}: payload has {len(payload)} bytes, header declares {declared}")

    tensors: "OrderedDict[str, np.ndarray]" = OrderedDict()
    offset = 0
    for entry, size in zip(header["tensors"], sizes):
        values = np.frombuffer(payload, dtype="<f8", count=size, offset=offset)
        tensors[entry["name"]] = values.reshape(entry["shape"]).astype(np.float64)
        offset += size * 8
    return header, tensors


def split_moments(tensors: Mapping[str, np.ndarray]
                  ) -> Tuple[Dict[str, np.ndarray], Dict[str, np.ndarray], Dict[str, np.ndarray]]:
    """Separate a tensor table into (parameters, first moments, second moments)."""
    params, m, v = {}, {}, {}
    for name, arr in tensors.items():
        if name.startswith(MOMENT_PREFIXES[0]):
            m[name[len(MOMENT_PREFIXES[0]):]] = arr
        elif name.startswith(MOMENT_PREFIXES[1]):
            v[name[len(MOMENT_PREFIXES[1]):]] = arr
        else:
            params[name] = arr
    return params, m, v


def generator_state(rng: np.random.Generator) -> dict:
    return rng.bit_generator.state


def restore_generator(state: dict) -> np.random.Generator:
    bit_generator = getattr(np.random, state["bit_generator"])()
    bit_generator.state = state
    return np.random.Generator(bit_generator)


def save_model(path, model, optimizer=None, header: Optional[dict] = None) -> Path:
    """Write a CrmfModel's parameters (plus AdamW moments when given)."""
    tensors: "OrderedDict[str, np.ndarray]" = OrderedDict(model.store.state_arrays())
    header = dict(header or {})
    header["model"] = model.config.to_dict()
    if optimizer is not None:
        state = optimizer.state
        for name in model.store:
            if name in state.m:
                tensors[MOMENT_PREFIXES[0] + name] = state.m[name]
                tensors[MOMENT_PREFIXES[1] + name] = state.v[name]
        extra = {n: state.m[n] for n in state.m if n not in model.store}
        for name, arr in extra.items():
            tensors[MOMENT_PREFIXES[0] + name] = arr
            tensors[MOMENT_PREFIXES[1] + name] = state.v[name]
        header["optim"] = {"step": state.step, "skipped": state.skipped,
                           "weight_decay": state.weight_decay, "betas": list(state.betas),
                           "eps": state.eps, "peak_lr": state.peak_lr,
                           "warmup_fraction": state.warmup_fraction,
                           "total_steps": state.total_steps}
    return save_checkpoint(path, tensors, header)


def load_model(path):
    """
    Rebuild a CrmfModel from a checkpoint.

    Returns:
        (model, header, first moments, second moments)
    """
    from model.config import ModelConfig
    from model.crmf import CrmfModel

    header, tensors = load_checkpoint(path)
    if "model" not in header:
        raise ValueError(f"{path}: checkpoint carries no model config")
    model = CrmfModel(ModelConfig.from_dict(header["model"]))
    params, m, v = split_moments(tensors)
    model.store.load_arrays(params, strict=True)
    return model, header, m, v


def restore_optimizer(optimizer, header: dict, m: Dict[str, np.ndarray], v: Dict[str, np.ndarray]):
    """Copy saved AdamW counters and moments into `optimizer.state`."""
    saved = header.get("optim")
    if saved is None:
        raise ValueError("checkpoint carries no optimizer state")
    state = optimizer.state
    state.step = int(saved["step"])
    state.skipped = int(saved["skipped"])
    state.weight_decay = float(saved["weight_decay"])
    state.betas = tuple(saved["betas"])
    state.eps = float(saved["eps"])
    state.peak_lr = float(saved["peak_lr"])
    state.warmup_fraction = float(saved["warmup_fraction"])
    state.total_steps = int(saved["total_steps"])
    state.m = {k: np.array(a) for k, a in m.items()}
    state.v = {k: np.array(a) for k, a in v.items()}
