"""Checkpoint directory layout: params.dvtn + params.index + config.json.

params.dvtn is a single DVTN uint8 tensor holding the concatenated raw
little-endian bytes of every state tensor; params.index maps parameter names
to (dtype, shape, byte offset, byte length). Self-contained and ecosystem
neutral.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch

from ..errors import DataError
from ..tensorio import read_tensor, write_tensor

PARAMS_FILE = "params.dvtn"
INDEX_FILE = "params.index"
CONFIG_FILE = "config.json"


def save_checkpoint(module: torch.nn.Module, ckpt_dir, config: dict) -> Path:
    ckpt_dir = Path(ckpt_dir)
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    index = []
    chunks = []
    offset = 0
    for name, tensor in module.state_dict().items():
        arr = tensor.detach().cpu().numpy()
        raw = np.ascontiguousarray(arr).astype(arr.dtype.newbyteorder("<")).tobytes()
        index.append({"name": name, "dtype": str(arr.dtype),
                      "shape": list(arr.shape), "offset": offset, "length": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    blob = np.frombuffer(b"".join(chunks), dtype=np.uint8)
    write_tensor(blob, ckpt_dir / PARAMS_FILE)
    (ckpt_dir / INDEX_FILE).write_text(json.dumps(index, indent=1))
    (ckpt_dir / CONFIG_FILE).write_text(json.dumps(config, indent=1, sort_keys=True))
    return ckpt_dir


def load_state(ckpt_dir) -> tuple[dict, dict]:
    """Returns (state_dict of torch tensors, config dict)."""
    ckpt_dir = Path(ckpt_dir)
    for fname in (PARAMS_FILE, INDEX_FILE, CONFIG_FILE):
        if not (ckpt_dir / fname).exists():
            raise DataError(f"checkpoint missing {fname}: {ckpt_dir}")
    blob = read_tensor(ckpt_dir / PARAMS_FILE).tobytes()
    index = json.loads((ckpt_dir / INDEX_FILE).read_text())
    state = {}
    for entry in index:
        dtype = np.dtype(entry["dtype"]).newbyteorder("<")
        raw = blob[entry["offset"]:entry["offset"] + entry["length"]]
        arr = np.frombuffer(raw, dtype=dtype).reshape(entry["shape"])
        state[entry["name"]] = torch.from_numpy(arr.astype(arr.dtype.newbyteorder("=")))
    config = json.loads((ckpt_dir / CONFIG_FILE).read_text())
    return state, config


def load_into(module: torch.nn.Module, ckpt_dir) -> dict:
    state, config = load_state(ckpt_dir)
    module.load_state_dict(state)
    return config


def params_bytes(module: torch.nn.Module, prefix: str = "") -> bytes:
    """Raw bytes of all state tensors under a name prefix, for bit-identity checks."""
    parts = []
    for name, tensor in module.state_dict().items():
        if name.startswith(prefix):
            parts.append(np.ascontiguousarray(tensor.detach().cpu().numpy()).tobytes())
    return b"".join(parts)
