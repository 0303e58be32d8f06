"""Binary tensor container: ``manifest.json`` + ``data.bin``.

The layout is fixed little-endian, row-major, so a container written on one
platform reads bit-identically on any other. Datasets, the hand template,
and training checkpoints all use this format.
"""

from __future__ import annotations

import json
import os
from typing import Any

import numpy as np

FORMAT_VERSION = "1"

# dtype tags stored in the manifest -> numpy dtypes (explicit byte order)
_DTYPES = {
    "<f4": np.dtype("<f4"),
    "<f8": np.dtype("<f8"),
    "<i8": np.dtype("<i8"),
    "|u1": np.dtype("|u1"),
}


class ContainerError(Exception):
    """Base class for container format errors."""


class ManifestError(ContainerError):
    """Manifest is missing, unparseable, or internally inconsistent."""


class ShapeMismatchError(ContainerError):
    """A tensor entry's shape/dtype does not describe its payload."""


class TruncatedPayloadError(ContainerError):
    """data.bin is shorter than the manifest's tensor index requires."""


def _dtype_tag(arr: np.ndarray) -> str:
    kind = arr.dtype.kind
    size = arr.dtype.itemsize
    if kind == "f" and size == 4:
        return "<f4"
    if kind == "f" and size == 8:
        return "<f8"
    if kind in ("i", "u") and size == 8 and kind == "i":
        return "<i8"
    if kind == "u" and size == 1:
        return "|u1"
    raise ShapeMismatchError(f"unsupported dtype {arr.dtype!r}")


def write_container(path: str, tensors: dict[str, np.ndarray], meta: dict[str, Any] | None = None) -> None:
    """Write ``tensors`` under directory ``path`` as manifest.json + data.bin."""
    os.makedirs(path, exist_ok=True)
    index = []
    offset = 0
    payload = []
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr)
        tag = _dtype_tag(arr)
        raw = arr.astype(_DTYPES[tag], copy=False).tobytes()
        index.append({
            "name": name,
            "shape": list(arr.shape),
            "dtype": tag,
            "offset": offset,
        })
        payload.append(raw)
        offset += len(raw)
    manifest = {
        "version": FORMAT_VERSION,
        "tensor_index": index,
        "meta": meta or {},
    }
    with open(os.path.join(path, "data.bin"), "wb") as f:
        for raw in payload:
            f.write(raw)
    with open(os.path.join(path, "manifest.json"), "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=1)


def _validate_index(index: list[dict], file_size: int) -> None:
    spans = []
    for entry in index:
        for key in ("name", "shape", "dtype", "offset"):
            if key not in entry:
                raise ManifestError(f"tensor entry missing key {key!r}")
        tag = entry["dtype"]
        if tag not in _DTYPES:
            raise ShapeMismatchError(f"unknown dtype tag {tag!r} for {entry['name']!r}")
        shape = entry["shape"]
        if not all(isinstance(s, int) and s >= 0 for s in shape):
            raise ShapeMismatchError(f"invalid shape {shape!r} for {entry['name']!r}")
        nbytes = int(np.prod(shape, dtype=np.int64)) * _DTYPES[tag].itemsize
        start = entry["offset"]
        if not isinstance(start, int) or start < 0:
            raise ManifestError(f"invalid offset for {entry['name']!r}")
        if start + nbytes > file_size:
            raise TruncatedPayloadError(
                f"tensor {entry['name']!r} needs bytes [{start}, {start + nbytes}) "
                f"but data.bin has only {file_size}")
        spans.append((start, start + nbytes, entry["name"]))
    spans.sort()
    for (s0, e0, n0), (s1, e1, n1) in zip(spans, spans[1:]):
        if s1 < e0:
            raise ManifestError(f"overlapping payloads: {n0!r} and {n1!r}")


def read_manifest(path: str) -> dict:
    manifest_path = os.path.join(path, "manifest.json")
    try:
        with open(manifest_path, "r", encoding="utf-8") as f:
            manifest = json.load(f)
    except FileNotFoundError:
        raise ManifestError(f"no manifest at {manifest_path}")
    except json.JSONDecodeError as e:
        raise ManifestError(f"corrupt manifest at {manifest_path}: {e}")
    if not isinstance(manifest, dict) or "tensor_index" not in manifest:
        raise ManifestError(f"manifest at {manifest_path} has no tensor_index")
    if manifest.get("version") != FORMAT_VERSION:
        raise ManifestError(f"unsupported container version {manifest.get('version')!r}")
    return manifest


def read_container(path: str) -> tuple[dict[str, np.ndarray], dict[str, Any]]:
    """Read all tensors from ``path``. The manifest is validated before any
    payload bytes are interpreted."""
    manifest = read_manifest(path)
    data_path = os.path.join(path, "data.bin")
    try:
        file_size = os.path.getsize(data_path)
    except FileNotFoundError:
        raise TruncatedPayloadError(f"no data.bin at {data_path}")
    index = manifest["tensor_index"]
    _validate_index(index, file_size)
    tensors: dict[str, np.ndarray] = {}
    with open(data_path, "rb") as f:
        raw = f.read()
    for entry in index:
        dtype = _DTYPES[entry["dtype"]]
        shape = tuple(entry["shape"])
        count = int(np.prod(shape, dtype=np.int64))
        start = entry["offset"]
        arr = np.frombuffer(raw, dtype=dtype, count=count, offset=start)
        tensors[entry["name"]] = arr.reshape(shape).copy()
    return tensors, manifest.get("meta", {})
