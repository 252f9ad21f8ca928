"""Versioned little-endian binary checkpoint formats.

Model container ("SXM1"): magic, one model-kind byte, a length-prefixed
UTF-8 JSON metadata record, then named float64 array records
(name-length, name bytes, rank, dims, row-major payload).

Projection record ("SXZ1"): magic, u32 input dim, u32 output dim, then
the row-major float64 matrix.
"""

import hashlib
import json
import struct

import numpy as np

MODEL_MAGIC = b"SXM1"
PROJECTION_MAGIC = b"SXZ1"

KIND_SOURCE = 0x01
KIND_TARGET = 0x02
KIND_MULT_TARGET = 0x03


class CheckpointError(ValueError):
    """Raised on malformed or mismatching checkpoint files."""


def _pack_arrays(kind, meta, arrays):
    out = [MODEL_MAGIC, struct.pack("<B", kind)]
    meta_bytes = json.dumps(meta, sort_keys=True).encode("utf-8")
    out.append(struct.pack("<I", len(meta_bytes)))
    out.append(meta_bytes)
    out.append(struct.pack("<I", len(arrays)))
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr, dtype="<f8")
        name_bytes = name.encode("utf-8")
        out.append(struct.pack("<I", len(name_bytes)))
        out.append(name_bytes)
        out.append(struct.pack("<I", arr.ndim))
        out.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.append(arr.tobytes())
    return b"".join(out)


def save_model(path, kind, meta, arrays):
    """Write a model checkpoint; `arrays` maps names to float64 ndarrays."""
    with open(path, "wb") as fh:
        fh.write(_pack_arrays(kind, meta, arrays))


def model_digest(kind, meta, arrays):
    """Stable hash of a model's full serialized state (provenance links)."""
    return hashlib.sha256(_pack_arrays(kind, meta, arrays)).hexdigest()


class _Reader:
    def __init__(self, blob):
        self.blob = blob
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.blob):
            raise CheckpointError("truncated checkpoint file")
        piece = self.blob[self.pos:self.pos + n]
        self.pos += n
        return piece

    def u32(self):
        return struct.unpack("<I", self.take(4))[0]


def peek_kind(path):
    """Read only the model-kind byte of a checkpoint."""
    with open(path, "rb") as fh:
        head = fh.read(5)
    if len(head) < 5 or head[:4] != MODEL_MAGIC:
        raise CheckpointError(f"{path}: not a model checkpoint (bad magic)")
    return head[4]


def load_model(path):
    """Read a model checkpoint; returns (kind, meta, arrays)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    r = _Reader(blob)
    if r.take(4) != MODEL_MAGIC:
        raise CheckpointError(f"{path}: not a model checkpoint (bad magic)")
    kind = r.take(1)[0]
    meta = json.loads(r.take(r.u32()).decode("utf-8"))
    arrays = {}
    for _ in range(r.u32()):
        name = r.take(r.u32()).decode("utf-8")
        rank = r.u32()
        dims = struct.unpack(f"<{rank}I", r.take(4 * rank))
        count = int(np.prod(dims)) if rank else 1
        arr = np.frombuffer(r.take(8 * count), dtype="<f8").reshape(dims)
        arrays[name] = arr.astype(np.float64)
    return kind, meta, arrays


def save_projection(path, z):
    """Write a projection matrix in the SXZ1 layout."""
    z = np.ascontiguousarray(z, dtype="<f8")
    if z.ndim != 2:
        raise CheckpointError(f"projection must be a matrix, got shape {z.shape}")
    with open(path, "wb") as fh:
        fh.write(PROJECTION_MAGIC)
        fh.write(struct.pack("<II", z.shape[0], z.shape[1]))
        fh.write(z.tobytes())


def load_projection(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    r = _Reader(blob)
    if r.take(4) != PROJECTION_MAGIC:
        raise CheckpointError(f"{path}: not a projection checkpoint (bad magic)")
    d_in, d_out = struct.unpack("<II", r.take(8))
    z = np.frombuffer(r.take(8 * d_in * d_out), dtype="<f8").reshape(d_in, d_out)
    return z.astype(np.float64)
