"""Binary weight files.

Layout (all integers little-endian)::

    b"CRPW"                      magic
    u32  format_version          currently 1
    u32  descriptor_length
    descriptor_length bytes      UTF-8 JSON: {"architecture": {...},
                                 "parameters": [{"name", "shape"}, ...]}
    float32 blobs                one per parameter, C order, declared order
    u64  checksum                BLAKE2b with an 8-byte digest over every
                                 preceding byte, read as a little-endian u64

Values are stored as float32; ``ReplicaWeights.snapped()`` gives the exact
in-memory image of what a save/load round trip returns.
"""

from __future__ import annotations

import hashlib
import json
import struct
from collections import OrderedDict
from pathlib import Path

import numpy as np

from .replica import Architecture, ReplicaWeights, ShapeError

MAGIC = b"CRPW"
FORMAT_VERSION = 1


class WeightFileError(ValueError):
    pass


class ChecksumError(WeightFileError):
    pass


class VersionError(WeightFileError):
    pass


def checksum(data: bytes) -> int:
    return int.from_bytes(hashlib.blake2b(data, digest_size=8).digest(), "little")


def dumps(weights: ReplicaWeights) -> bytes:
    desc = {
        "architecture": weights.arch.to_dict(),
        "parameters": [{"name": n, "shape": list(v.shape)} for n, v in weights.params.items()],
    }
    desc_bytes = json.dumps(desc, sort_keys=True, separators=(",", ":")).encode()
    parts = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(desc_bytes)), desc_bytes]
    parts += [np.ascontiguousarray(v, dtype="<f4").tobytes() for v in weights.params.values()]
    body = b"".join(parts)
    return body + struct.pack("<Q", checksum(body))


def loads(data: bytes, expected: Architecture | None = None) -> ReplicaWeights:
    if len(data) < 20:
        raise ChecksumError("file too short to hold a header and checksum")
    body, (stored,) = data[:-8], struct.unpack("<Q", data[-8:])
    if checksum(body) != stored:
        raise ChecksumError("checksum mismatch (file truncated or corrupted)")
    if body[:4] != MAGIC:
        raise WeightFileError(f"bad magic {body[:4]!r}")
    version, desc_len = struct.unpack("<II", body[4:12])
    if version != FORMAT_VERSION:
        raise VersionError(f"unsupported weight format_version {version}")
    desc = json.loads(body[12 : 12 + desc_len])
    arch = Architecture(**desc["architecture"])
    if expected is not None and arch != expected:
        declared = dict(expected.param_shapes())
        for name, shape in arch.param_shapes():
            if declared.get(name) != shape:
                raise ShapeError(f"layer {name}: file has shape {shape}, expected {declared.get(name)}")
        raise ShapeError(f"architecture mismatch: {arch} != {expected}")
    declared = dict(arch.param_shapes())
    params = OrderedDict()
    offset = 12 + desc_len
    for entry in desc["parameters"]:
        name, shape = entry["name"], tuple(entry["shape"])
        if declared.get(name) != shape:
            raise ShapeError(f"layer {name}: stored shape {shape} does not match architecture ({declared.get(name)})")
        nbytes = 4 * int(np.prod(shape, dtype=np.int64))
        blob = body[offset : offset + nbytes]
        if len(blob) != nbytes:
            raise WeightFileError(f"layer {name}: blob truncated")
        params[name] = np.frombuffer(blob, dtype="<f4").astype(np.float64).reshape(shape)
        offset += nbytes
    if offset != len(body):
        raise WeightFileError(f"{len(body) - offset} trailing bytes after the last parameter")
    return ReplicaWeights(arch, params)


def save_weights(weights: ReplicaWeights, path) -> None:
    Path(path).write_bytes(dumps(weights))


def load_weights(path, expected: Architecture | None = None) -> ReplicaWeights:
    return loads(Path(path).read_bytes(), expected)
