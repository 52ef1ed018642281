"""Binary model checkpoints: spec header plus named float64 blobs.

Layout (all little-endian): magic "LCKP", u32 version, u32 header
length, the JSON-encoded ModelSpec, u32 parameter count, then per
parameter: u16 name length, utf-8 name, u8 ndim, ndim x u64 dims,
row-major float64 payload. Save followed by load restores every
parameter bit-exactly.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .models import Model, ModelSpec

MAGIC = b"LCKP"
VERSION = 1


def save_checkpoint(path: str | Path, model: Model) -> None:
    state = model.state_dict()
    header = model.spec.to_json().encode("utf-8")
    with Path(path).open("wb") as handle:
        handle.write(MAGIC)
        handle.write(struct.pack("<II", VERSION, len(header)))
        handle.write(header)
        handle.write(struct.pack("<I", len(state)))
        for name in sorted(state):
            data = np.ascontiguousarray(state[name], dtype="<f8")
            encoded = name.encode("utf-8")
            handle.write(struct.pack("<H", len(encoded)))
            handle.write(encoded)
            handle.write(struct.pack("<B", data.ndim))
            handle.write(struct.pack(f"<{data.ndim}Q", *data.shape))
            handle.write(data.tobytes())


def load_checkpoint(path: str | Path) -> Model:
    with Path(path).open("rb") as handle:
        magic = handle.read(4)
        if magic != MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        version, header_len = struct.unpack("<II", handle.read(8))
        if version != VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        spec = ModelSpec.from_json(handle.read(header_len).decode("utf-8"))
        (count,) = struct.unpack("<I", handle.read(4))
        state: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", handle.read(2))
            name = handle.read(name_len).decode("utf-8")
            (ndim,) = struct.unpack("<B", handle.read(1))
            dims = struct.unpack(f"<{ndim}Q", handle.read(8 * ndim)) if ndim else ()
            size = int(np.prod(dims)) if dims else 1
            state[name] = np.frombuffer(handle.read(8 * size), dtype="<f8").reshape(dims).copy()
    model = Model(spec, seed=0)
    model.load_state_dict(state)
    return model
