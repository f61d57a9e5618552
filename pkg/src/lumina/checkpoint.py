"""
Binary checkpoint format.

Layout::

    b"LUMN"                      4-byte magic
    u32 little-endian            format version (currently 1)
    manifest                     UTF-8 lines "<path> <dtype> <d0,d1,...>\\n",
                                 terminated by an empty line
    payload                      little-endian float32 arrays, manifest order

The manifest must name exactly the tensors of the architecture table with
matching shapes.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .autodiff import Tensor
from .errors import MagicError, ManifestError, TruncatedError, VersionError
from .networks import ARCHITECTURE, ARCHITECTURE_SHAPES, ModelParams

MAGIC = b"LUMN"
VERSION = 1
_DTYPE = "float32"


def to_bytes(params: ModelParams) -> bytes:
    lines, blobs = [], []
    for path, shape in ARCHITECTURE:
        arr = np.asarray(params[path].data)
        if arr.shape != shape:
            raise ManifestError(f"{path}: shape {arr.shape} does not match architecture {shape}")
        lines.append(f"{path} {_DTYPE} {','.join(map(str, shape))}\n")
        blobs.append(arr.astype("<f4").tobytes())
    manifest = ("".join(lines) + "\n").encode("utf-8")
    return MAGIC + struct.pack("<I", VERSION) + manifest + b"".join(blobs)


def checkpoint_save(params: ModelParams, path):
    Path(path).write_bytes(to_bytes(params))


def from_bytes(blob: bytes) -> ModelParams:
    if len(blob) < 8:
        raise TruncatedError(f"checkpoint is {len(blob)} bytes, shorter than its header")
    if blob[:4] != MAGIC:
        raise MagicError(f"bad magic {blob[:4]!r}, expected {MAGIC!r}")
    (version,) = struct.unpack("<I", blob[4:8])
    if version != VERSION:
        raise VersionError(f"unsupported checkpoint version {version} (expected {VERSION})")
    end = blob.find(b"\n\n", 8)
    if end < 0:
        raise TruncatedError("manifest terminator not found")
    try:
        text = blob[8:end + 1].decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ManifestError(f"manifest is not valid UTF-8: {exc}") from exc

    entries = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        parts = line.split()
        if len(parts) != 3:
            raise ManifestError(f"manifest line {lineno} malformed: {line!r}")
        path, dtype, dims = parts
        if path not in ARCHITECTURE_SHAPES:
            raise ManifestError(f"manifest names unknown parameter {path!r}")
        if dtype != _DTYPE:
            raise ManifestError(f"{path}: unsupported dtype {dtype!r}")
        try:
            shape = tuple(int(d) for d in dims.split(","))
        except ValueError:
            raise ManifestError(f"{path}: bad shape {dims!r}") from None
        if shape != ARCHITECTURE_SHAPES[path]:
            raise ManifestError(f"{path}: shape {shape} does not match architecture {ARCHITECTURE_SHAPES[path]}")
        entries.append((path, shape))
    missing = set(ARCHITECTURE_SHAPES) - {p for p, _ in entries}
    if missing:
        raise ManifestError(f"manifest lacks parameters: {sorted(missing)}")
    if len(entries) != len(ARCHITECTURE_SHAPES):
        raise ManifestError("manifest lists a parameter more than once")

    offset = end + 2
    tensors = {}
    for path, shape in entries:
        n = int(np.prod(shape)) * 4
        if offset + n > len(blob):
            raise TruncatedError(f"payload ends inside {path}")
        arr = np.frombuffer(blob, dtype="<f4", count=n // 4, offset=offset).reshape(shape)
        tensors[path] = Tensor(arr.astype(np.float32), requires_grad=True)
        offset += n
    if offset != len(blob):
        raise TruncatedError(f"{len(blob) - offset} trailing bytes after payload")
    return ModelParams({p: tensors[p] for p, _ in ARCHITECTURE})


def checkpoint_load(path) -> ModelParams:
    return from_bytes(Path(path).read_bytes())
