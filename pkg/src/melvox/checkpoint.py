"""Checkpoint container: a self-describing named-tensor file.

Byte layout, all integers little-endian:

    offset  field
    0       magic "MVOX" (4 bytes)
    4       format version, u32 (currently 1)
    8       config JSON length u32, then canonical UTF-8 JSON
    .       tensor count u32
    .       per tensor, sorted by name:
                name length u16, name UTF-8
                dtype code u8 (0 = f32, 1 = f64, 2 = i64)
                ndim u8, then ndim dims as u32
                payload length u64, then raw little-endian values
    .       train-state JSON length u32, then canonical UTF-8 JSON
    end-32  sha256 over every preceding byte

Canonical JSON (sorted keys, no whitespace) plus name-sorted tensors makes
save -> load -> save reproduce the file byte for byte. The checksum guards
the whole payload; any truncation or flip surfaces as a corruption error
and nothing partial is returned.
"""

from __future__ import annotations

import hashlib
import json
import struct

import numpy as np

from .errors import CorruptionError, UnsupportedFormatError

MAGIC = b"MVOX"
VERSION = 1

_DTYPE_CODES = {"float32": 0, "float64": 1, "int64": 2}
_CODE_DTYPES = {0: "<f4", 1: "<f8", 2: "<i8"}


def _canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def save_checkpoint(path: str, config: dict, tensors: dict[str, np.ndarray], state: dict) -> None:
    names = sorted(tensors)
    if len(names) != len(set(names)):
        raise CorruptionError("duplicate tensor names")
    parts = [MAGIC, struct.pack("<I", VERSION)]
    cfg = _canonical_json(config)
    parts.append(struct.pack("<I", len(cfg)))
    parts.append(cfg)
    parts.append(struct.pack("<I", len(names)))
    for name in names:
        arr = np.ascontiguousarray(tensors[name])
        key = str(arr.dtype)
        if key not in _DTYPE_CODES:
            raise UnsupportedFormatError(f"tensor {name}: dtype {key} not storable")
        nb = name.encode("utf-8")
        parts.append(struct.pack("<H", len(nb)))
        parts.append(nb)
        parts.append(struct.pack("<BB", _DTYPE_CODES[key], arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        raw = arr.astype(_CODE_DTYPES[_DTYPE_CODES[key]], copy=False).tobytes()
        parts.append(struct.pack("<Q", len(raw)))
        parts.append(raw)
    st = _canonical_json(state)
    parts.append(struct.pack("<I", len(st)))
    parts.append(st)
    blob = b"".join(parts)
    digest = hashlib.sha256(blob).digest()
    with open(path, "wb") as f:
        f.write(blob)
        f.write(digest)


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.blob):
            raise CorruptionError(f"truncated checkpoint: {what} at byte {self.pos}")
        out = self.blob[self.pos : self.pos + n]
        self.pos += n
        return out

    def u(self, fmt: str, what: str) -> int:
        size = struct.calcsize(fmt)
        return struct.unpack(fmt, self.take(size, what))[0]


def load_checkpoint(path: str) -> tuple[dict, dict[str, np.ndarray], dict]:
    with open(path, "rb") as f:
        full = f.read()
    if len(full) < 44:
        raise CorruptionError(f"file of {len(full)} bytes is too short for a checkpoint")
    blob, digest = full[:-32], full[-32:]
    if hashlib.sha256(blob).digest() != digest:
        raise CorruptionError("checksum mismatch")

    r = _Reader(blob)
    if r.take(4, "magic") != MAGIC:
        raise CorruptionError("bad magic: not a checkpoint file")
    version = r.u("<I", "version")
    if version != VERSION:
        raise UnsupportedFormatError(f"checkpoint version {version}, this build reads {VERSION}")

    cfg_len = r.u("<I", "config length")
    config = json.loads(r.take(cfg_len, "config").decode("utf-8"))

    count = r.u("<I", "tensor count")
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        name_len = r.u("<H", "tensor name length")
        name = r.take(name_len, "tensor name").decode("utf-8")
        code = r.u("<B", "dtype code")
        if code not in _CODE_DTYPES:
            raise CorruptionError(f"tensor {name}: unknown dtype code {code}")
        ndim = r.u("<B", "ndim")
        shape = tuple(
            struct.unpack(f"<{ndim}I", r.take(4 * ndim, "dims")) if ndim else ()
        )
        nbytes = r.u("<Q", "payload length")
        raw = r.take(nbytes, f"tensor {name} payload")
        arr = np.frombuffer(raw, dtype=_CODE_DTYPES[code]).reshape(shape)
        if name in tensors:
            raise CorruptionError(f"duplicate tensor name {name}")
        tensors[name] = arr.copy()  # writable, detached from the blob

    st_len = r.u("<I", "state length")
    state = json.loads(r.take(st_len, "state").decode("utf-8"))
    if r.pos != len(blob):
        raise CorruptionError(f"{len(blob) - r.pos} trailing bytes after state")
    return config, tensors, state
