"""Versioned binary container for named arrays plus a JSON meta block.

Layout (little-endian):

    offset 0   magic "SNNCKPT1" (8 bytes)
    offset 8   uint32 header length in bytes
    offset 12  UTF-8 JSON header
    then       raw array payloads, back to back

The header holds {"version": 1, "meta": {...}, "arrays": [{name, dtype,
shape, offset, nbytes}, ...]} with offsets relative to the payload start.
Arrays are stored little-endian, C order. Round-trips are bitwise exact.
"""

import json
import struct

import numpy as np

from .util import atomic_write_bytes

MAGIC = b"SNNCKPT1"
VERSION = 1

# dtype tag -> little-endian numpy dtype
_DTYPES = {"f8": "<f8", "i8": "<i8", "u1": "|u1"}


class ContainerError(ValueError):
    """Malformed or truncated container file."""


def save_container(path, meta, arrays):
    """Write meta (JSON-serializable dict) and named arrays atomically."""
    entries = []
    payloads = []
    offset = 0
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr)
        tag = {np.float64: "f8", np.int64: "i8", np.uint8: "u1"}.get(arr.dtype.type)
        if tag is None:
            raise ContainerError(f"unsupported dtype {arr.dtype} for array {name!r}")
        raw = arr.astype(_DTYPES[tag], copy=False).tobytes()
        entries.append(
            {
                "name": name,
                "dtype": tag,
                "shape": list(arr.shape),
                "offset": offset,
                "nbytes": len(raw),
            }
        )
        payloads.append(raw)
        offset += len(raw)
    header = json.dumps(
        {"version": VERSION, "meta": meta, "arrays": entries},
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")
    blob = MAGIC + struct.pack("<I", len(header)) + header + b"".join(payloads)
    atomic_write_bytes(path, blob)


def load_container(path):
    """Read back (meta, {name: array}); validates magic and sizes first."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(MAGIC) + 4 or blob[: len(MAGIC)] != MAGIC:
        raise ContainerError(f"{path}: not a {MAGIC.decode()} container")
    (header_len,) = struct.unpack_from("<I", blob, len(MAGIC))
    header_start = len(MAGIC) + 4
    payload_start = header_start + header_len
    if len(blob) < payload_start:
        raise ContainerError(f"{path}: truncated header")
    try:
        header = json.loads(blob[header_start:payload_start].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ContainerError(f"{path}: bad header: {exc}") from None
    if header.get("version") != VERSION:
        raise ContainerError(f"{path}: unsupported container version {header.get('version')}")
    arrays = {}
    for entry in header["arrays"]:
        start = payload_start + entry["offset"]
        end = start + entry["nbytes"]
        if end > len(blob):
            raise ContainerError(f"{path}: truncated payload for array {entry['name']!r}")
        dtype = np.dtype(_DTYPES[entry["dtype"]])
        arr = np.frombuffer(blob[start:end], dtype=dtype).reshape(entry["shape"])
        arrays[entry["name"]] = arr.astype(dtype.newbyteorder("="), copy=True)
    return header["meta"], arrays
