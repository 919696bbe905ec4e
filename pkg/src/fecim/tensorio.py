"""Flat tensor container: a self-describing, versioned file of named arrays.

Layout (all little-endian):

    fecim-tensors 1
    count <N>
    tensor <name> <dtype> <d0,d1,...>
    ...one line per tensor...
    <blank line>
    <raw binary payloads, concatenated in header order>

Supported dtypes: float64, int64, uint8.  Used for the shipped network
weight fixture and the digit-image evaluation set.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

MAGIC = "fecim-tensors"
VERSION = 1
_DTYPES = {"float64": "<f8", "int64": "<i8", "uint8": "u1"}


def save_tensors(path: str | Path, tensors: dict) -> None:
    names = list(tensors)
    lines = [f"{MAGIC} {VERSION}", f"count {len(names)}"]
    blobs = []
    for name in names:
        arr = np.asarray(tensors[name])
        dtype = {"f": "float64", "i": "int64", "u": "uint8"}[arr.dtype.kind]
        arr = arr.astype(_DTYPES[dtype])
        shape = ",".join(str(d) for d in arr.shape) if arr.ndim else "1"
        lines.append(f"tensor {name} {dtype} {shape}")
        blobs.append(arr.tobytes())
    header = ("\n".join(lines) + "\n\n").encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def load_tensors(path: str | Path) -> dict:
    with open(path, "rb") as fh:
        data = fh.read()
    head_end = data.index(b"\n\n")
    lines = data[:head_end].decode("ascii").splitlines()
    if not lines or not lines[0].startswith(MAGIC):
        raise ValueError(f"{path}: not a fecim tensor container")
    version = int(lines[0].split()[1])
    if version != VERSION:
        raise ValueError(f"{path}: unsupported container version {version}")
    count = int(lines[1].split()[1])
    entries = []
    for line in lines[2 : 2 + count]:
        _, name, dtype, shape_s = line.split()
        shape = tuple(int(d) for d in shape_s.split(","))
        entries.append((name, dtype, shape))
    out = {}
    offset = head_end + 2
    for name, dtype, shape in entries:
        np_dtype = np.dtype(_DTYPES[dtype])
        n_bytes = int(np.prod(shape)) * np_dtype.itemsize
        arr = np.frombuffer(data[offset : offset + n_bytes], dtype=np_dtype).reshape(shape)
        out[name] = arr.copy()
        offset += n_bytes
    return out
