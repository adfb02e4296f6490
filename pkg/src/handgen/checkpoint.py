"""Checkpoint container: a directory of one binary blob per named tensor plus
a manifest.json carrying the config snapshot, step count, and split hash.

Blob format: 8-byte magic ``GCPT0001``, little-endian uint32 rank, one
little-endian uint64 per dimension, then IEEE-754 float32 values row-major.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"GCPT0001"
FORMAT_VERSION = 1
TENSOR_DIR = "tensors"


class CheckpointError(RuntimeError):
    pass


def write_tensor_blob(path: str | Path, values: np.ndarray) -> None:
    arr = np.asarray(values, dtype="<f4", order="C")  # keeps 0-d rank intact
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", arr.ndim))
        for dim in arr.shape:
            fh.write(struct.pack("<Q", dim))
        fh.write(arr.tobytes(order="C"))


def read_tensor_blob(path: str | Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {raw[:8]!r}")
    (rank,) = struct.unpack("<I", raw[8:12])
    offset = 12
    shape = []
    for _ in range(rank):
        (dim,) = struct.unpack("<Q", raw[offset : offset + 8])
        shape.append(dim)
        offset += 8
    count = int(np.prod(shape)) if shape else 1
    values = np.frombuffer(raw, dtype="<f4", count=count, offset=offset)
    if values.size != count:
        raise CheckpointError(f"{path}: truncated blob")
    # float32 storage upcast exactly into the float64 compute dtype
    return values.astype(np.float64).reshape(shape)


@dataclass
class Checkpoint:
    tensors: dict[str, np.ndarray]
    config: dict
    step: int
    split_hash: str

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def names(self, prefix: str = "") -> list[str]:
        return [n for n in self.tensors if n.startswith(prefix)]


def save_checkpoint(
    out_dir: str | Path,
    tensors: dict[str, np.ndarray],
    config: dict,
    step: int,
    split_hash: str = "",
) -> Path:
    out_dir = Path(out_dir)
    (out_dir / TENSOR_DIR).mkdir(parents=True, exist_ok=True)
    files = {}
    for name in sorted(tensors):
        rel = f"{TENSOR_DIR}/{name}.bin"
        write_tensor_blob(out_dir / rel, tensors[name])
        files[name] = rel
    manifest = {
        "format_version": FORMAT_VERSION,
        "config": config,
        "step": int(step),
        "split_hash": split_hash,
        "tensors": files,
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True), encoding="utf-8")
    return out_dir


def load_checkpoint(ckpt_dir: str | Path) -> Checkpoint:
    ckpt_dir = Path(ckpt_dir)
    manifest_path = ckpt_dir / "manifest.json"
    if not manifest_path.exists():
        raise CheckpointError(f"{ckpt_dir}: no manifest.json")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{ckpt_dir}: format version {version} != {FORMAT_VERSION}")
    tensors = {
        name: read_tensor_blob(ckpt_dir / rel) for name, rel in manifest["tensors"].items()
    }
    return Checkpoint(
        tensors=tensors,
        config=manifest.get("config", {}),
        step=int(manifest.get("step", 0)),
        split_hash=manifest.get("split_hash", ""),
    )


def checkpoint_bytes(ckpt_dir: str | Path) -> bytes:
    """Concatenated bytes of every file, for bit-identity comparisons."""
    ckpt_dir = Path(ckpt_dir)
    chunks = []
    for path in sorted(ckpt_dir.rglob("*")):
        if path.is_file():
            chunks.append(path.relative_to(ckpt_dir).as_posix().encode())
            chunks.append(path.read_bytes())
    return b"".join(chunks)
