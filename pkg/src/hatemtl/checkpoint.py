"""Single-file tensor container for model checkpoints and feature caches.

Layout: an 8-byte magic, an 8-byte little-endian manifest length, the
manifest JSON (UTF-8), then each tensor's raw bytes in manifest order.
Parameter tensors are little-endian float32 (exact round trip for
float32-valued models); index tensors in feature caches use int64. Every
shape in the manifest is verified on load.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"HMTLCKPT"

_DTYPES = {"<f4": np.dtype("<f4"), "<i8": np.dtype("<i8")}


class CheckpointError(ValueError):
    pass


def save_container(
    path: str | Path, manifest: dict, tensors: dict[str, np.ndarray]
) -> None:
    table = []
    blobs = []
    for name, arr in tensors.items():
        if arr.dtype.kind == "f":
            out = np.ascontiguousarray(arr, dtype="<f4")
            code = "<f4"
        elif arr.dtype.kind in "iu":
            out = np.ascontiguousarray(arr, dtype="<i8")
            code = "<i8"
        else:
            raise CheckpointError(f"unsupported dtype {arr.dtype} for {name!r}")
        table.append({"name": name, "shape": list(arr.shape), "dtype": code})
        blobs.append(out.tobytes())
    payload = dict(manifest)
    payload["tensors"] = table
    head = json.dumps(payload, sort_keys=True).encode("utf-8")
    with Path(path).open("wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(head)))
        fh.write(head)
        for blob in blobs:
            fh.write(blob)


def load_container(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    data = Path(path).read_bytes()
    if data[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint container")
    (head_len,) = struct.unpack("<Q", data[len(MAGIC) : len(MAGIC) + 8])
    start = len(MAGIC) + 8
    manifest = json.loads(data[start : start + head_len].decode("utf-8"))
    offset = start + head_len
    tensors: dict[str, np.ndarray] = {}
    for entry in manifest.pop("tensors"):
        dtype = _DTYPES.get(entry["dtype"])
        if dtype is None:
            raise CheckpointError(f"{path}: unknown dtype {entry['dtype']!r}")
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * dtype.itemsize
        if offset + nbytes > len(data):
            raise CheckpointError(f"{path}: truncated tensor {entry['name']!r}")
        arr = np.frombuffer(data[offset : offset + nbytes], dtype=dtype).reshape(shape)
        tensors[entry["name"]] = arr.copy()
        offset += nbytes
    if offset != len(data):
        raise CheckpointError(f"{path}: trailing bytes after tensors")
    return manifest, tensors


def verify_shapes(
    tensors: dict[str, np.ndarray], expected: dict[str, tuple[int, ...]]
) -> None:
    for name, shape in expected.items():
        if name not in tensors:
            raise CheckpointError(f"missing tensor {name!r}")
        if tensors[name].shape != tuple(shape):
            raise CheckpointError(
                f"tensor {name!r} has shape {tensors[name].shape}, expected {shape}"
            )
    extra = set(tensors) - set(expected)
    if extra:
        raise CheckpointError(f"unexpected tensors: {sorted(extra)}")
