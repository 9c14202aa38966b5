"""Binary weight files and their JSON sidecars.

Layout (all integers little-endian):

    magic   4 bytes  b"AVNW"
    version u32      1
    count   u32      number of tensors
    then per tensor:
        name_len u16, name UTF-8 bytes
        rank     u8,  dims u32 each
        payload  float32 little-endian, prod(dims) values

A sidecar `<file>.meta.json` records the architecture id, hyperparameters,
vocabulary, and training seed so a checkpoint is self-describing.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"AVNW"
FORMAT_VERSION = 1
_MAX_ELEMENTS = 1 << 31  # sanity cap against corrupt dims


class WeightFormatError(Exception):
    """Raised when a weight file cannot be parsed or fails validation."""


def sidecar_path(path: str | Path) -> Path:
    p = Path(path)
    return p.with_name(p.name + ".meta.json")


def save_weights(path: str | Path, tensors: dict[str, np.ndarray], meta: dict) -> None:
    """Write tensors and sidecar metadata; overwrites existing files."""
    path = Path(path)
    chunks = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(tensors))]
    for name, arr in tensors.items():
        name_b = name.encode("utf-8")
        if len(name_b) > 0xFFFF:
            raise WeightFormatError(f"tensor name too long: {name[:40]}...")
        # asarray, not ascontiguousarray: the latter promotes 0-d to 1-d
        arr32 = np.asarray(arr, dtype="<f4")
        if arr32.ndim > 0xFF:
            raise WeightFormatError(f"tensor {name!r} rank {arr32.ndim} exceeds format limit")
        chunks.append(struct.pack("<H", len(name_b)))
        chunks.append(name_b)
        chunks.append(struct.pack("<B", arr32.ndim))
        for dim in arr32.shape:
            chunks.append(struct.pack("<I", dim))
        chunks.append(arr32.tobytes())
    path.write_bytes(b"".join(chunks))
    sidecar_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


class _Reader:
    def __init__(self, blob: bytes, origin: str) -> None:
        self.blob = blob
        self.pos = 0
        self.origin = origin

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.blob):
            raise WeightFormatError(
                f"{self.origin}: truncated while reading {what} "
                f"(need {n} bytes at offset {self.pos}, have {len(self.blob) - self.pos})"
            )
        out = self.blob[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self, what: str) -> int:
        return self.take(1, what)[0]

    def u16(self, what: str) -> int:
        return struct.unpack("<H", self.take(2, what))[0]

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]


def load_weights(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    """Read tensors and sidecar metadata; raises WeightFormatError on any defect."""
    path = Path(path)
    if not path.exists():
        raise WeightFormatError(f"weight file not found: {path}")
    r = _Reader(path.read_bytes(), str(path))
    magic = r.take(4, "magic")
    if magic != MAGIC:
        raise WeightFormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    version = r.u32("version")
    if version != FORMAT_VERSION:
        raise WeightFormatError(f"{path}: unsupported format version {version}")
    count = r.u32("tensor count")
    tensors: dict[str, np.ndarray] = {}
    for k in range(count):
        name_len = r.u16(f"name length of tensor {k}")
        try:
            name = r.take(name_len, f"name of tensor {k}").decode("utf-8")
        except UnicodeDecodeError as e:
            raise WeightFormatError(f"{path}: tensor {k} name is not valid UTF-8") from e
        if name in tensors:
            raise WeightFormatError(f"{path}: duplicate tensor name {name!r}")
        rank = r.u8(f"rank of {name!r}")
        dims = tuple(r.u32(f"dim {i} of {name!r}") for i in range(rank))
        n = 1
        for dim in dims:
            n *= dim
        if n > _MAX_ELEMENTS:
            raise WeightFormatError(f"{path}: tensor {name!r} dims {dims} overflow sanity cap")
        payload = r.take(4 * n, f"payload of {name!r}")
        arr = np.frombuffer(payload, dtype="<f4").reshape(dims).copy()
        tensors[name] = arr
    if r.pos != len(r.blob):
        raise WeightFormatError(
            f"{path}: {len(r.blob) - r.pos} trailing bytes after last tensor"
        )
    meta_file = sidecar_path(path)
    if not meta_file.exists():
        raise WeightFormatError(f"missing sidecar: {meta_file}")
    try:
        meta = json.loads(meta_file.read_text())
    except json.JSONDecodeError as e:
        raise WeightFormatError(f"{meta_file}: invalid JSON ({e})") from e
    if not isinstance(meta, dict):
        raise WeightFormatError(f"{meta_file}: sidecar must be a JSON object")
    return tensors, meta
