"""Binary checkpoints: versioned header, named float32 tensors, Adam moments.

Layout (little-endian)::

    magic            8 bytes
    header_len       uint32
    header           JSON (format version, config echo, seed, step, extras)
    tensor_count     uint32
    per tensor       uint16 name_len, name, uint8 ndim, uint32 dims..., f32 data
    per tensor       f32 first moment, f32 second moment (same order)
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .nn.params import ParameterStore

MAGIC = b"KPGCKPT\x01"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, store: ParameterStore, header: dict) -> None:
    head = dict(header, format_version=FORMAT_VERSION, step=store.step)
    raw = json.dumps(head, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(raw)))
        fh.write(raw)
        fh.write(struct.pack("<I", len(store.params)))
        for name, t in store:
            enc = name.encode("utf-8")
            fh.write(struct.pack("<HB", len(enc), t.data.ndim))
            fh.write(enc)
            fh.write(struct.pack(f"<{t.data.ndim}I", *t.data.shape))
            fh.write(np.ascontiguousarray(t.data, dtype="<f4").tobytes())
        for name, _ in store:
            fh.write(np.ascontiguousarray(store.m[name], dtype="<f4").tobytes())
            fh.write(np.ascontiguousarray(store.v[name], dtype="<f4").tobytes())


def read_checkpoint(path):
    """Returns (header, {name: array}, {name: (m, v)})."""
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
        (n,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(n).decode("utf-8"))
        if header.get("format_version") != FORMAT_VERSION:
            raise CheckpointError(f"{path}: unsupported format {header.get('format_version')}")
        (count,) = struct.unpack("<I", fh.read(4))
        tensors = {}
        for _ in range(count):
            name_len, ndim = struct.unpack("<HB", fh.read(3))
            name = fh.read(name_len).decode("utf-8")
            shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
            size = int(np.prod(shape)) if shape else 1
            tensors[name] = np.frombuffer(fh.read(4 * size), dtype="<f4").reshape(shape)
        moments = {}
        for name, arr in tensors.items():
            m = np.frombuffer(fh.read(4 * arr.size), dtype="<f4").reshape(arr.shape)
            v = np.frombuffer(fh.read(4 * arr.size), dtype="<f4").reshape(arr.shape)
            moments[name] = (m, v)
    return header, tensors, moments


def load_into(store: ParameterStore, tensors: dict, moments: dict | None = None,
              step: int = 0) -> None:
    """Copy checkpoint tensors into an existing store, checking names and shapes."""
    missing = set(store.params) - set(tensors)
    extra = set(tensors) - set(store.params)
    if missing or extra:
        raise CheckpointError(f"parameter mismatch: missing={sorted(missing)[:5]} "
                              f"unexpected={sorted(extra)[:5]}")
    for name, t in store:
        if tensors[name].shape != t.data.shape:
            raise CheckpointError(f"{name}: shape {tensors[name].shape} != {t.data.shape}")
        t.data[...] = tensors[name]
        if moments is not None:
            store.m[name][...] = moments[name][0]
            store.v[name][...] = moments[name][1]
    store.step = step
