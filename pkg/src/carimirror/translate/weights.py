"""Portable weights container: length-prefixed JSON manifest followed by raw
little-endian float32 tensors in manifest order. Bit-exact round trips."""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import WeightsFormatError

FORMAT_VERSION = 1


@dataclass
class WeightsBundle:
    manifest: dict
    tensors: dict  # name -> float32 ndarray, ordered per manifest

    def __post_init__(self):
        names = [t["name"] for t in self.manifest.get("tensors", [])]
        if list(self.tensors.keys()) != names:
            raise WeightsFormatError("tensor ordering disagrees with manifest")
        for entry in self.manifest["tensors"]:
            arr = self.tensors[entry["name"]]
            if list(arr.shape) != list(entry["shape"]):
                raise WeightsFormatError(
                    f"tensor {entry['name']} shape {arr.shape} != manifest {entry['shape']}")
            if arr.dtype != np.float32:
                raise WeightsFormatError(f"tensor {entry['name']} must be float32")

    @property
    def topology_id(self) -> str:
        return self.manifest["topology_id"]

    @property
    def architecture(self) -> dict:
        return self.manifest["architecture"]

    @property
    def lambda_max(self) -> float:
        return float(self.manifest["lambda_max"])

    def tensor(self, name) -> np.ndarray:
        if name not in self.tensors:
            raise WeightsFormatError(f"bundle is missing tensor {name!r}")
        return self.tensors[name]


def make_bundle(topology_id, lambda_max, architecture, tensors,
                training_fingerprint="untracked") -> WeightsBundle:
    ordered = {}
    entries = []
    for name, arr in tensors.items():
        arr32 = np.ascontiguousarray(arr, dtype=np.float32)
        ordered[name] = arr32
        entries.append({"name": name, "shape": list(arr32.shape)})
    manifest = {
        "format_version": FORMAT_VERSION,
        "topology_id": topology_id,
        "lambda_max": float(lambda_max),
        "architecture": architecture,
        "training_fingerprint": training_fingerprint,
        "tensors": entries,
    }
    return WeightsBundle(manifest, ordered)


def save_weights(bundle: WeightsBundle, path):
    blob = json.dumps(bundle.manifest, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for entry in bundle.manifest["tensors"]:
            arr = bundle.tensors[entry["name"]]
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_weights(path) -> WeightsBundle:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 8:
        raise WeightsFormatError(f"{path}: too short for a manifest header")
    (mlen,) = struct.unpack("<Q", raw[:8])
    if len(raw) < 8 + mlen:
        raise WeightsFormatError(f"{path}: truncated manifest")
    try:
        manifest = json.loads(raw[8:8 + mlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise WeightsFormatError(f"{path}: malformed manifest: {exc}") from exc
    if manifest.get("format_version") != FORMAT_VERSION:
        raise WeightsFormatError(
            f"{path}: format version {manifest.get('format_version')} != {FORMAT_VERSION}")
    offset = 8 + mlen
    tensors = {}
    for entry in manifest.get("tensors", []):
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        nbytes = 4 * count
        if offset + nbytes > len(raw):
            raise WeightsFormatError(f"{path}: truncated tensor {entry['name']!r}")
        arr = np.frombuffer(raw, dtype="<f4", count=count, offset=offset)
        tensors[entry["name"]] = arr.reshape(entry["shape"]).copy()
        offset += nbytes
    if offset != len(raw):
        raise WeightsFormatError(f"{path}: {len(raw) - offset} trailing bytes")
    return WeightsBundle(manifest, tensors)
