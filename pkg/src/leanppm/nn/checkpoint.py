"""Binary checkpoint container.

Layout (all integers little-endian)::

    magic    8 bytes   b"LEANPPM1"
    hlen     uint32    length of the JSON header in bytes
    header   hlen      UTF-8 JSON, keys sorted, no whitespace
    payload            float64 little-endian values, tensors back to back

The header holds ``meta`` (model type, config, vocab sizes, normalizer,
seed, ...) and ``tensors``: a list of ``{"name", "shape", "offset",
"count", "trainable"}`` records in payload order, ``offset`` counted in
values (not bytes).
"""
from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"LEANPPM1"


def dumps(tensors, meta):
    """Serialise an ordered name -> (array, trainable) mapping plus metadata."""
    records, chunks, offset = [], [], 0
    for name, (arr, trainable) in tensors.items():
        arr = np.array(arr, dtype="<f8", order="C")  # ascontiguousarray would promote 0-d to 1-d
        records.append({"name": name, "shape": list(arr.shape), "offset": offset,
                        "count": int(arr.size), "trainable": bool(trainable)})
        chunks.append(arr.tobytes())
        offset += arr.size
    header = json.dumps({"meta": meta, "tensors": records}, sort_keys=True,
                        separators=(",", ":")).encode("utf-8")
    return MAGIC + struct.pack("<I", len(header)) + header + b"".join(chunks)


def loads(blob):
    if blob[:8] != MAGIC:
        raise ValueError("not a leanppm checkpoint")
    (hlen,) = struct.unpack("<I", blob[8:12])
    header = json.loads(blob[12:12 + hlen].decode("utf-8"))
    payload = np.frombuffer(blob[12 + hlen:], dtype="<f8")
    tensors = {}
    for rec in header["tensors"]:
        vals = payload[rec["offset"]:rec["offset"] + rec["count"]]
        tensors[rec["name"]] = (vals.reshape(tuple(rec["shape"])).astype(np.float64), rec["trainable"])
    return tensors, header["meta"]


def save(path, tensors, meta):
    with open(path, "wb") as fh:
        fh.write(dumps(tensors, meta))


def load(path):
    with open(path, "rb") as fh:
        return loads(fh.read())
