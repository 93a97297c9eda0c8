"""Binary and JSON file formats.

Frame file (``.a4df``), little-endian::

    b"A4DF" | version u32 | count u32 | count x (x y z r g b: f32, semantic u16, pad u16, instance u32)

Prediction file (``.a4dp``)::

    b"A4DP" | version u32 | count u32 | count x (semantic u16, instance u32)

Checkpoint (``.a4dm``)::

    b"A4DM" | version u32 | header length u32 | JSON header | f64 tensors in header order
"""
from __future__ import annotations

import hashlib
import json
import os
import struct
from pathlib import Path

import numpy as np

from .sensing import PointCloudFrame

FRAME_MAGIC = b"A4DF"
PRED_MAGIC = b"A4DP"
MODEL_MAGIC = b"A4DM"
FORMAT_VERSION = 1

FRAME_DTYPE = np.dtype([
    ("xyz", "<f4", 3), ("rgb", "<f4", 3),
    ("semantic", "<u2"), ("pad", "<u2"), ("instance", "<u4"),
])
PRED_DTYPE = np.dtype([("semantic", "<u2"), ("instance", "<u4")])  # packed, 6 bytes

_HEADER = struct.Struct("<4sII")


class FormatError(ValueError):
    pass


def _check_header(buf: bytes, magic: bytes, what: str, path) -> int:
    if len(buf) < _HEADER.size:
        raise FormatError(f"{path}: truncated {what} file")
    got, version, count = _HEADER.unpack_from(buf)
    if got != magic:
        raise FormatError(f"{path}: expected {what} magic {magic!r}, found {got!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported {what} version {version} (expected {FORMAT_VERSION})")
    return count


def write_frame(path, frame: PointCloudFrame) -> None:
    rec = np.zeros(len(frame), dtype=FRAME_DTYPE)
    rec["xyz"] = frame.xyz
    rec["rgb"] = frame.rgb
    rec["semantic"] = frame.semantic
    rec["instance"] = frame.instance
    with open(path, "wb") as f:
        f.write(_HEADER.pack(FRAME_MAGIC, FORMAT_VERSION, len(frame)))
        f.write(rec.tobytes())


def read_frame(path, state_index: int = 0) -> PointCloudFrame:
    buf = Path(path).read_bytes()
    count = _check_header(buf, FRAME_MAGIC, "frame", path)
    if len(buf) != _HEADER.size + count * FRAME_DTYPE.itemsize:
        raise FormatError(f"{path}: size does not match point count {count}")
    rec = np.frombuffer(buf, dtype=FRAME_DTYPE, offset=_HEADER.size, count=count)
    return PointCloudFrame(rec["xyz"].astype(float), rec["rgb"].astype(float),
                           rec["semantic"].astype(np.int64), rec["instance"].astype(np.int64),
                           state_index)


def write_prediction(path, semantic: np.ndarray, instance: np.ndarray) -> None:
    semantic = np.asarray(semantic).reshape(-1)
    instance = np.asarray(instance).reshape(-1)
    if semantic.shape != instance.shape:
        raise ValueError("semantic and instance arrays differ in length")
    rec = np.zeros(len(semantic), dtype=PRED_DTYPE)
    rec["semantic"] = semantic
    rec["instance"] = instance
    with open(path, "wb") as f:
        f.write(_HEADER.pack(PRED_MAGIC, FORMAT_VERSION, len(rec)))
        f.write(rec.tobytes())


def read_prediction(path) -> tuple[np.ndarray, np.ndarray]:
    buf = Path(path).read_bytes()
    count = _check_header(buf, PRED_MAGIC, "prediction", path)
    if len(buf) != _HEADER.size + count * PRED_DTYPE.itemsize:
        raise FormatError(f"{path}: size does not match point count {count}")
    rec = np.frombuffer(buf, dtype=PRED_DTYPE, offset=_HEADER.size, count=count)
    return rec["semantic"].astype(np.int64), rec["instance"].astype(np.int64)


def write_checkpoint(path, tensors: dict, meta: dict | None = None) -> None:
    names = sorted(tensors)
    header = {
        "tensors": [{"name": k, "shape": list(np.shape(tensors[k]))} for k in names],
        "meta": meta or {},
    }
    hbytes = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MODEL_MAGIC, FORMAT_VERSION, len(hbytes)))
        f.write(hbytes)
        for k in names:
            f.write(np.ascontiguousarray(tensors[k], dtype="<f8").tobytes())


def read_checkpoint(path) -> tuple[dict, dict]:
    buf = Path(path).read_bytes()
    hlen = _check_header(buf, MODEL_MAGIC, "checkpoint", path)
    off = _HEADER.size
    header = json.loads(buf[off:off + hlen])
    off += hlen
    tensors = {}
    for t in header["tensors"]:
        n = int(np.prod(t["shape"])) if t["shape"] else 1
        tensors[t["name"]] = np.frombuffer(buf, "<f8", n, off).reshape(t["shape"]).copy()
        off += 8 * n
    if off != len(buf):
        raise FormatError(f"{path}: trailing bytes after checkpoint tensors")
    return tensors, header["meta"]


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path):
    return json.loads(Path(path).read_text())


def tree_digest(root) -> str:
    """SHA-256 over relative paths and contents of every file below ``root``."""
    h = hashlib.sha256()
    root = Path(root)
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames.sort()
        for name in sorted(filenames):
            p = Path(dirpath) / name
            h.update(str(p.relative_to(root)).encode())
            h.update(b"\0")
            h.update(p.read_bytes())
    return h.hexdigest()
