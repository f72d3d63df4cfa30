"""Model checkpoint: b"DRLM" | uint32 header length | JSON header | float64 blocks.

Blocks follow parameter registration order, which the header lists with shapes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .networks import Model

MAGIC = b"DRLM"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(model: Model, path: str | Path, extra: dict | None = None) -> None:
    header = {
        "format_version": FORMAT_VERSION,
        "variant": model.variant,
        "model": model.config(),
        "params": [[name, list(t.shape)] for name, t in model.params.items()],
        "extra": extra or {},
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(head)))
        fh.write(head)
        for t in model.params.values():
            fh.write(np.ascontiguousarray(t.data, dtype="<f8").tobytes())


def read_checkpoint_header(path: str | Path) -> dict:
    with open(path, "rb") as fh:
        return _header(fh, path)


def _header(fh, path) -> dict:
    if fh.read(4) != MAGIC:
        raise CheckpointError(f"{path}: not a model checkpoint (bad magic)")
    (n,) = struct.unpack("<I", fh.read(4))
    header = json.loads(fh.read(n).decode("utf-8"))
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {header.get('format_version')}")
    return header


def load_checkpoint(path: str | Path) -> Model:
    with open(path, "rb") as fh:
        header = _header(fh, path)
        body = fh.read()
    model = Model.from_config(header["model"])
    expected = [[name, list(t.shape)] for name, t in model.params.items()]
    if expected != header["params"]:
        raise CheckpointError(f"{path}: parameter layout does not match the model configuration")
    offset = 0
    for t in model.params.values():
        n = t.data.size * 8
        if offset + n > len(body):
            raise CheckpointError(f"{path}: truncated weight blocks")
        t.data[...] = np.frombuffer(body, dtype="<f8", count=t.data.size, offset=offset).reshape(t.shape)
        offset += n
    if offset != len(body):
        raise CheckpointError(f"{path}: {len(body) - offset} trailing bytes")
    return model
