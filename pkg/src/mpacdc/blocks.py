"""Equivariant feature containers and their on-disk format.

A block file is::

    uint64 little-endian  header length in bytes
    header                UTF-8 JSON (key, index lists, shape, dtype)
    payload               little-endian float64 values, C order

"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractError, ParseError


@dataclass(frozen=True)
class Labels:
    """Named integer multi-indices, one row per entry."""

    names: tuple
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.int64)
        if vals.ndim == 1 and len(self.names) == 1:
            vals = vals[:, None]
        vals = vals.reshape(-1, len(self.names))
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "values", vals)

    def __len__(self):
        return len(self.values)

    def __eq__(self, other):
        return (
            isinstance(other, Labels)
            and self.names == other.names
            and self.values.shape == other.values.shape
            and np.array_equal(self.values, other.values)
        )

    def column(self, name):
        return self.values[:, self.names.index(name)]

    def select(self, mask_or_index):
        return Labels(self.names, self.values[mask_or_index])

    def to_json(self):
        return {"names": list(self.names), "values": self.values.tolist()}

    @classmethod
    def from_json(cls, obj):
        return cls(tuple(obj["names"]), np.array(obj["values"], dtype=np.int64).reshape(-1, len(obj["names"])))


@dataclass
class EquivariantBlock:
    """Values of shape (samples, 2*lam + 1, properties) with parity ``sigma``."""

    sigma: int
    lam: int
    values: np.ndarray
    samples: Labels
    properties: Labels
    tag: str = ""

    def __post_init__(self):
        v = self.values
        expected = (len(self.samples), 2 * self.lam + 1, len(self.properties))
        if v.shape != expected:
            raise ContractError(f"block values have shape {v.shape}, index lists imply {expected}")

    @property
    def key(self):
        return (self.sigma, self.lam, self.tag)

    def copy_with(self, values=None, samples=None, properties=None, tag=None):
        return EquivariantBlock(
            self.sigma,
            self.lam,
            self.values if values is None else values,
            self.samples if samples is None else samples,
            self.properties if properties is None else properties,
            self.tag if tag is None else tag,
        )


@dataclass
class TensorMap:
    """Blocks sharing one sample list, keyed by (sigma, lam)."""

    tag: str
    blocks: dict = field(default_factory=dict)

    def keys(self):
        return sorted(self.blocks, key=lambda k: (k[1], -k[0]))

    def __getitem__(self, key):
        return self.blocks[key]

    def __contains__(self, key):
        return key in self.blocks

    def __iter__(self):
        for k in self.keys():
            yield self.blocks[k]

    def __len__(self):
        return len(self.blocks)

    def lambdas(self):
        return sorted({k[1] for k in self.blocks})

    @property
    def samples(self):
        first = next(iter(self.blocks.values()))
        return first.samples

    def invariants(self):
        return self.blocks[(1, 0)]

    def select_samples(self, mask):
        return TensorMap(
            self.tag,
            {k: b.copy_with(values=b.values[mask], samples=b.samples.select(mask)) for k, b in self.blocks.items()},
        )

    def filter(self, keys):
        return TensorMap(self.tag, {k: self.blocks[k] for k in self.keys() if k in set(keys)})


def concatenate_samples(maps):
    """Stack TensorMaps computed on disjoint sample sets (same keys, same properties)."""
    maps = list(maps)
    if len(maps) == 1:
        return maps[0]
    out = TensorMap(maps[0].tag)
    for key in maps[0].keys():
        parts = [m.blocks[key] for m in maps]
        first = parts[0]
        for p in parts[1:]:
            if p.properties != first.properties:
                raise ContractError(f"property mismatch for key {key} while concatenating")
        out.blocks[key] = first.copy_with(
            values=np.concatenate([p.values for p in parts], axis=0),
            samples=Labels(first.samples.names, np.concatenate([p.samples.values for p in parts])),
        )
    return out


# ---------------------------------------------------------------------------
# files


def _write_container(path, header, payload):
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    data = np.ascontiguousarray(payload, dtype="<f8").tobytes()
    blob = struct.pack("<Q", len(head)) + head + data
    Path(path).write_bytes(blob)
    return hashlib.sha256(blob).hexdigest()


def _read_container(path):
    blob = Path(path).read_bytes()
    if len(blob) < 8:
        raise ParseError(f"{path}: truncated container")
    (n,) = struct.unpack("<Q", blob[:8])
    try:
        header = json.loads(blob[8:8 + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise ParseError(f"{path}: bad header ({err})") from None
    payload = np.frombuffer(blob[8 + n:], dtype="<f8")
    return header, payload


def block_filename(block):
    sign = "p" if block.sigma > 0 else "m"
    return f"block_sigma{sign}_lambda{block.lam}.bin"


def save_block(block, path):
    """Write one block file; returns the sha256 of the file content."""
    header = {
        "format": "mpacdc-block-1",
        "key": {"sigma": block.sigma, "lambda": block.lam, "tag": block.tag},
        "samples": block.samples.to_json(),
        "components": list(range(-block.lam, block.lam + 1)),
        "properties": block.properties.to_json(),
        "shape": list(block.values.shape),
        "dtype": "<f8",
    }
    return _write_container(path, header, block.values)


def load_block(path):
    header, payload = _read_container(path)
    shape = tuple(header["shape"])
    if payload.size != int(np.prod(shape)):
        raise ParseError(f"{path}: payload size {payload.size} does not match shape {shape}")
    key = header["key"]
    return EquivariantBlock(
        key["sigma"],
        key["lambda"],
        payload.reshape(shape).copy(),
        Labels.from_json(header["samples"]),
        Labels.from_json(header["properties"]),
        key["tag"],
    )


def save_tensormap(tmap, directory):
    """Write one file per block plus ``manifest.json``; returns the manifest dict."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for block in tmap:
        name = block_filename(block)
        digest = save_block(block, directory / name)
        entries.append(
            {
                "sigma": block.sigma,
                "lambda": block.lam,
                "tag": block.tag,
                "file": name,
                "shape": list(block.values.shape),
                "sha256": digest,
            }
        )
    manifest = {"tag": tmap.tag, "blocks": entries}
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def load_tensormap(directory):
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    out = TensorMap(manifest["tag"])
    for entry in manifest["blocks"]:
        block = load_block(directory / entry["file"])
        out.blocks[(block.sigma, block.lam)] = block
    return out


def save_arrays(path, header, arrays):
    """Generic container: ``arrays`` is a dict name -> float array, stored back to back."""
    layout = []
    flat = []
    for name, arr in arrays.items():
        arr = np.asarray(arr, dtype=float)
        layout.append({"name": name, "shape": list(arr.shape)})
        flat.append(arr.ravel())
    header = dict(header, arrays=layout, dtype="<f8")
    payload = np.concatenate(flat) if flat else np.zeros(0)
    return _write_container(path, header, payload)


def load_arrays(path):
    header, payload = _read_container(path)
    out = {}
    offset = 0
    for item in header.get("arrays", []):
        size = int(np.prod(item["shape"]))
        out[item["name"]] = payload[offset:offset + size].reshape(item["shape"]).copy()
        offset += size
    if offset != payload.size:
        raise ParseError(f"{path}: payload size does not match declared arrays")
    return header, out
