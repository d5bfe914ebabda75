"""Model checkpoints: config + parameters + RNG state in one binary file.

Layout (little-endian):
    magic "CRCK" | u16 version=1 | u32 header length | header JSON (utf-8)
    raw tensor bytes, concatenated in header order
    u32 CRC32 over every preceding byte

The JSON header carries the model kind, its config dict, the generator state
needed to resume the data-order stream, free-form metadata, and one
(name, dtype, shape, nbytes) descriptor per tensor. Tensors are stored as
little-endian raw bytes in descriptor order. Writes go to a temp file first
and rename into place, so a crash never leaves a half-written checkpoint.
"""

from __future__ import annotations

import json
import os
import struct
import zlib
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from .errors import (
    BadMagicError,
    ChecksumError,
    FormatVersionError,
    RecordValidationError,
    TruncatedFileError,
)

MAGIC = b"CRCK"
VERSION = 1
_DTYPES = {"float32": "<f4", "float64": "<f8"}


@dataclass
class Checkpoint:
    kind: str                       # "capsnet" or "cnn"
    config: dict[str, Any]          # model config as plain JSON values
    params: dict[str, np.ndarray]
    rng_state: Optional[dict] = None
    meta: dict[str, Any] = field(default_factory=dict)


def _jsonable_rng(state: Optional[dict]):
    """numpy's PCG64 state holds ints > 2**64; stringify them for JSON."""
    if state is None:
        return None
    return json.loads(json.dumps(state, default=str))


def _restore_rng_ints(state):
    if state is None:
        return None
    inner = state.get("state", {})
    for key in ("state", "inc"):
        if key in inner and isinstance(inner[key], str):
            inner[key] = int(inner[key])
    if isinstance(state.get("uinteger"), str):
        state["uinteger"] = int(state["uinteger"])
    return state


def save(path: str, ckpt: Checkpoint) -> None:
    descriptors = []
    blobs = []
    for name, arr in ckpt.params.items():
        dt = str(arr.dtype)
        if dt not in _DTYPES:
            raise RecordValidationError(f"tensor {name!r} has unsupported dtype {dt}")
        blob = np.ascontiguousarray(arr, dtype=_DTYPES[dt]).tobytes()
        descriptors.append({"name": name, "dtype": dt, "shape": list(arr.shape), "nbytes": len(blob)})
        blobs.append(blob)
    header = {
        "kind": ckpt.kind,
        "config": ckpt.config,
        "rng_state": _jsonable_rng(ckpt.rng_state),
        "meta": ckpt.meta,
        "tensors": descriptors,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    out = bytearray()
    out += MAGIC
    out += struct.pack("<HI", VERSION, len(header_bytes))
    out += header_bytes
    for blob in blobs:
        out += blob
    out += struct.pack("<I", zlib.crc32(bytes(out)))
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(out)
    os.replace(tmp, path)


def load(path: str) -> Checkpoint:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 4 or raw[:4] != MAGIC:
        raise BadMagicError(f"{path}: not a checkpoint file (magic {raw[:4]!r})")
    if len(raw) < 10:
        raise TruncatedFileError(f"{path}: header incomplete", len(raw))
    version, header_len = struct.unpack_from("<HI", raw, 4)
    if version != VERSION:
        raise FormatVersionError(f"{path}: checkpoint version {version}, supported: {VERSION}")
    body_start = 10 + header_len
    if len(raw) < body_start + 4:
        raise TruncatedFileError(f"{path}: header claims {header_len} bytes, file too short", len(raw))
    try:
        header = json.loads(raw[10:body_start].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise RecordValidationError(f"{path}: header is not valid JSON ({exc})") from exc
    tensors = header.get("tensors", [])
    total = sum(int(d["nbytes"]) for d in tensors)
    expected = body_start + total + 4
    if len(raw) < expected:
        raise TruncatedFileError(
            f"{path}: file holds {len(raw)} bytes, {expected} expected for {len(tensors)} tensors",
            len(raw),
        )
    stored_crc = struct.unpack_from("<I", raw, expected - 4)[0]
    actual_crc = zlib.crc32(raw[: expected - 4])
    if stored_crc != actual_crc:
        raise ChecksumError(f"{path}: CRC32 mismatch (stored {stored_crc:#010x}, computed {actual_crc:#010x})")
    params: dict[str, np.ndarray] = {}
    off = body_start
    for d in tensors:
        dt = d["dtype"]
        if dt not in _DTYPES:
            raise RecordValidationError(f"{path}: tensor {d['name']!r} has unsupported dtype {dt}")
        shape = tuple(int(x) for x in d["shape"])
        nbytes = int(d["nbytes"])
        want = int(np.prod(shape, dtype=np.int64)) * int(_DTYPES[dt][-1])
        if nbytes != want:
            raise RecordValidationError(
                f"{path}: tensor {d['name']!r} claims {nbytes} bytes but shape {shape} needs {want}"
            )
        arr = np.frombuffer(raw, dtype=_DTYPES[dt], count=int(np.prod(shape, dtype=np.int64)), offset=off)
        params[d["name"]] = arr.reshape(shape).astype(dt, copy=True)
        off += nbytes
    return Checkpoint(
        kind=header["kind"],
        config=header["config"],
        params=params,
        rng_state=_restore_rng_ints(header.get("rng_state")),
        meta=header.get("meta", {}),
    )
