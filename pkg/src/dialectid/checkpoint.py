"""Checkpoint serialization.

Binary layout, little-endian:
  magic "LIDC", u32 version,
  u64 blob length + canonical JSON metadata (sorted keys),
  u32 tensor count, then per tensor:
    u32 name length, name utf-8, u32 ndim, u32 dims..., float64 data.

Writes go to a temp file in the target directory followed by an atomic
rename. Metadata lists the non-trainable buffer names so reloading
restores the exact trainable flags; reload then forward reproduces
bit-identical outputs (values are stored at full 64-bit precision).
"""

import json
import os
import struct
import tempfile
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import IoFault
from .layers import ParamStore

MAGIC = b"LIDC"
VERSION = 1


@dataclass
class Checkpoint:
    store: ParamStore
    meta: dict


def save_checkpoint(path, ckpt):
    path = str(path)
    meta = dict(ckpt.meta)
    meta["buffers"] = [n for n, t in ckpt.store.items() if not t.requires_grad]
    blob = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    names = ckpt.store.names()
    try:
        fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path) or ".",
                                   prefix=".ckpt-", suffix=".tmp")
        with os.fdopen(fd, "wb") as f:
            f.write(MAGIC)
            f.write(struct.pack("<I", VERSION))
            f.write(struct.pack("<Q", len(blob)))
            f.write(blob)
            f.write(struct.pack("<I", len(names)))
            for name in names:
                data = np.ascontiguousarray(ckpt.store[name].data, dtype="<f8")
                nb = name.encode("utf-8")
                f.write(struct.pack("<I", len(nb)))
                f.write(nb)
                f.write(struct.pack("<I", data.ndim))
                f.write(struct.pack(f"<{data.ndim}I", *data.shape))
                f.write(data.tobytes())
        os.replace(tmp, path)
    except OSError as e:
        raise IoFault(f"cannot write checkpoint {path}: {e}") from e


def load_checkpoint(path):
    path = str(path)
    try:
        with open(path, "rb") as f:
            if f.read(4) != MAGIC:
                raise IoFault(f"{path}: not a checkpoint file")
            (version,) = struct.unpack("<I", f.read(4))
            if version != VERSION:
                raise IoFault(f"{path}: unsupported version {version}")
            (blob_len,) = struct.unpack("<Q", f.read(8))
            meta = json.loads(f.read(blob_len).decode("utf-8"))
            (count,) = struct.unpack("<I", f.read(4))
            buffers = set(meta.get("buffers", []))
            store = ParamStore()
            for _ in range(count):
                (name_len,) = struct.unpack("<I", f.read(4))
                name = f.read(name_len).decode("utf-8")
                (ndim,) = struct.unpack("<I", f.read(4))
                shape = struct.unpack(f"<{ndim}I", f.read(4 * ndim))
                n = int(np.prod(shape)) if ndim else 1
                data = np.frombuffer(f.read(8 * n), dtype="<f8").reshape(shape).copy()
                trainable = name not in buffers
                t = ad.Tensor(data, trainable)
                if trainable:
                    t.grad = np.zeros_like(data)
                store.add(name, t)
    except OSError as e:
        raise IoFault(f"cannot read checkpoint {path}: {e}") from e
    return Checkpoint(store, meta)
