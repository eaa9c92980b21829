"""Single-file weights container: JSON header plus raw float32 arrays."""

from __future__ import annotations

import dataclasses
import json
import struct
from pathlib import Path

import numpy as np
import torch

from .config import ModelConfig, dataclass_from_dict

MAGIC = b"HWTS"
CHECKPOINT_FORMAT_VERSION = 1


def save_checkpoint(model, path: str | Path) -> None:
    """Named float32 little-endian arrays with a config echo in the header."""
    arrays = {}
    for name, tensor in model.state_dict().items():
        arrays[name] = np.ascontiguousarray(
            tensor.detach().cpu().numpy().astype("<f4"))
    entries = []
    offset = 0
    for name, arr in arrays.items():
        entries.append({
            "name": name,
            "shape": list(arr.shape),
            "offset": offset,
            "nbytes": arr.nbytes,
        })
        offset += arr.nbytes
    header = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "config": dataclasses.asdict(model.cfg),
        "arrays": entries,
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<Q", len(blob)))
        f.write(blob)
        for arr in arrays.values():
            f.write(arr.tobytes())


def read_checkpoint(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    """-> (header, name -> float32 array). Validates magic and version."""
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != MAGIC:
            raise ValueError(f"not a weights file (magic {magic!r})")
        (header_len,) = struct.unpack("<Q", f.read(8))
        header = json.loads(f.read(header_len).decode())
        if header.get("format_version") != CHECKPOINT_FORMAT_VERSION:
            raise ValueError(
                f"unsupported checkpoint version: {header.get('format_version')!r}")
        payload = f.read()
    arrays = {}
    for entry in header["arrays"]:
        start, nbytes = entry["offset"], entry["nbytes"]
        arr = np.frombuffer(payload[start:start + nbytes], dtype="<f4")
        arrays[entry["name"]] = arr.reshape(entry["shape"]).copy()
    return header, arrays


def load_checkpoint(path: str | Path, vocabulary):
    """Rebuild the detector recorded in a weights file."""
    from .network import HOIDetector

    header, arrays = read_checkpoint(path)
    cfg = dataclass_from_dict(ModelConfig, header["config"])
    model = HOIDetector(cfg, vocabulary)
    state = {name: torch.from_numpy(arr) for name, arr in arrays.items()}
    model.load_state_dict(state)
    model.eval()
    return model
