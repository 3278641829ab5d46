"""Bit-exact map file format ("SOM1") and the taxonomy JSON sidecar.

SOM1 layout, little-endian:
    bytes 0..3   magic "SOM1"
    u32          version (currently 1)
    u32          width_cells
    u32          height_cells
    u32          channels
    f32          cell_size_m
    then channels * height * width payload bytes, channel-major,
    row-major within each channel, one byte = round(p * 255)
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .som import ClassAction, ClassTaxonomy, SemanticOccupancyMap, TaxonomyEntry

MAGIC = b"SOM1"
VERSION = 1
_HEADER = struct.Struct("<4sIIIIf")


class BadMagic(Exception):
    """File does not start with the SOM1 magic bytes."""


class TruncatedFile(Exception):
    """File ends before the header-declared payload."""


class VersionUnsupported(Exception):
    """Header declares a version this reader does not understand."""


def write_som(som: SemanticOccupancyMap, path) -> None:
    header = _HEADER.pack(MAGIC, VERSION, som.width_cells, som.height_cells,
                          som.channels, som.cell_size_m)
    Path(path).write_bytes(header + som.values.tobytes())


def read_som(path, taxonomy_ref: str = "default") -> SemanticOccupancyMap:
    raw = Path(path).read_bytes()
    if len(raw) < 4 or raw[:4] != MAGIC:
        raise BadMagic(f"{path}: expected magic {MAGIC!r}")
    if len(raw) < _HEADER.size:
        raise TruncatedFile(f"{path}: {len(raw)} bytes, header needs {_HEADER.size}")
    _, version, width, height, channels, cell_size = _HEADER.unpack_from(raw)
    if version != VERSION:
        raise VersionUnsupported(f"{path}: version {version}, supported: {VERSION}")
    expected = _HEADER.size + channels * height * width
    if len(raw) < expected:
        raise TruncatedFile(f"{path}: {len(raw)} bytes, header declares {expected}")
    values = np.frombuffer(raw, dtype=np.uint8, offset=_HEADER.size,
                           count=channels * height * width)
    values = values.reshape(channels, height, width).copy()
    return SemanticOccupancyMap(values, cell_size, taxonomy_ref)


def write_taxonomy(taxonomy: ClassTaxonomy, path) -> None:
    rows = [
        {"index": e.index, "name": e.name, "action": e.action.value, "obstacle": e.obstacle}
        for e in taxonomy.entries
    ]
    Path(path).write_text(json.dumps(rows, indent=2) + "\n")


def read_taxonomy(path) -> ClassTaxonomy:
    rows = json.loads(Path(path).read_text())
    entries = tuple(
        TaxonomyEntry(int(r["index"]), str(r["name"]), ClassAction(r["action"]), bool(r["obstacle"]))
        for r in rows
    )
    return ClassTaxonomy(entries)
